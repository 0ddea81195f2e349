import csv
import hashlib
import json
from pathlib import Path

import pytest

from stochwaste.cli import main


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def city(tmp_path_factory):
    d = tmp_path_factory.mktemp("city")
    assert run("synth", "--bins", 8, "--weeks", 6, "--collections", 10, "--horizon", 3,
               "--out-dir", d, "--seed", 1) == 0
    assert run("draw-instance", "--master", d / "city.json", "--bins", 3, "--draws", 2,
               "--horizon", 3, "--out-dir", d, "--seed", 2) == 0
    assert run("gen-tree", "--histories", d / "city.histories.csv", "--structure", "1x2x2",
               "--iterations", 300, "--instance", d / "inst_1_3.json", "--out-dir", d,
               "--seed", 3) == 0
    assert run("gen-tree", "--histories", d / "city.histories.csv", "--structure", "1x2x2",
               "--iterations", 300, "--output", "full_tree.json", "--out-dir", d, "--seed", 3) == 0
    return d


def manifest(d, command):
    return json.loads((Path(d) / f"{command}.manifest.json").read_text(encoding="utf-8"))


def test_generated_files_and_manifest(city):
    for name in ("city.json", "city.histories.csv", "inst_1_3.json", "inst_2_3.json", "tree.json",
                 "tree_diagnostics.json"):
        assert (city / name).exists(), name
    m = manifest(city, "gen-tree")
    assert m["seed"] == 3 and not m["error_marker"]
    for path, digest in m["outputs"].items():
        assert hashlib.sha256(Path(path).read_bytes()).hexdigest() == digest


def test_tree_is_seed_deterministic(city, tmp_path):
    args = ["gen-tree", "--histories", city / "city.histories.csv", "--structure", "1x2x2",
            "--iterations", 300, "--instance", city / "inst_1_3.json", "--seed", 3]
    assert run(*args, "--out-dir", tmp_path) == 0
    assert (tmp_path / "tree.json").read_bytes() == (city / "tree.json").read_bytes()


def test_solve_and_kpi_recheck(city, tmp_path):
    assert run("solve", "--instance", city / "inst_1_3.json", "--tree", city / "tree.json",
               "--out-dir", tmp_path, "--export-mps", tmp_path / "m.mps") == 0
    rep = json.loads((tmp_path / "solve_report.json").read_text(encoding="utf-8"))
    plan = json.loads((tmp_path / "plan.json").read_text(encoding="utf-8"))
    assert rep["kpi_recheck"] is True
    assert set(plan["kpis"]) >= {"profit", "expected_collected_kg", "total_distance_km"}
    assert (tmp_path / "m.mps").exists()


def test_global_flags_before_subcommand(city, tmp_path):
    assert run("--out-dir", tmp_path, "--seed", 9, "export-mps", "--instance", city / "inst_1_3.json",
               "--tree", city / "tree.json") == 0
    assert (tmp_path / "model.mps").exists()
    assert manifest(tmp_path, "export-mps")["seed"] == 9


def test_msym_requires_symmetric(city, tmp_path):
    base = ["solve", "--instance", city / "inst_1_3.json", "--tree", city / "tree.json",
            "--variant", "Msym", "--out-dir", tmp_path]
    assert run(*base) == 2
    assert run(*base, "--symmetrize") == 0


def test_roll_outputs(city, tmp_path):
    assert run("roll", "--instance", city / "inst_1_3.json", "--tree", city / "tree.json", "-W", 1,
               "--tl", 60, "--out-dir", tmp_path) == 0
    rep = json.loads((tmp_path / "rh_report.json").read_text(encoding="utf-8"))
    assert rep["variant"] == "M"
    assert (tmp_path / "rh_series.csv").exists()


def test_roll_rejects_window(city, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("roll", "--instance", city / "inst_1_3.json", "--tree", city / "tree.json", "-W", 5,
            "--out-dir", tmp_path)
    assert exc.value.code == 2


def test_measures_batch(city, tmp_path):
    assert run("measures", "--batch", city, "--tree", city / "full_tree.json", "--out-dir", tmp_path) in (0, 1)
    rows = list(csv.reader((tmp_path / "measures.csv").open(encoding="utf-8")))
    assert rows[0] == ["measure", "inst_1_3", "inst_2_3"]
    assert [r[0] for r in rows[1:4]] == ["RP", "EV", "WS"]
    assert (tmp_path / "measures_summary.csv").exists()


def test_stability(city, tmp_path):
    assert run("stability", "--histories", city / "city.histories.csv", "--instance",
               city / "inst_1_3.json", "--structures", "1x2x2", "1x3x1", "--runs", 2,
               "--iterations", 100, "--out-dir", tmp_path) in (0, 1)
    data = json.loads((tmp_path / "stability.json").read_text(encoding="utf-8"))
    assert [r["structure"] for r in data] == ["1x2x2", "1x3x1"]


def test_missing_input_exit_code(tmp_path, capsys):
    assert run("gen-tree", "--histories", tmp_path / "none.csv", "--structure", "1x2",
               "--out-dir", tmp_path) == 2
    assert "not found" in capsys.readouterr().err
