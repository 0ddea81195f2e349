"""Command-line front end.

Every subcommand writes its outputs plus a ``<command>.manifest.json`` into
``--out-dir``.  The exit status is 1 when the report carries an error marker,
2 for bad arguments or unreadable inputs, 0 otherwise.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .instance import (InstanceError, derive_accumulation_trajectories, draw_instance,
                       load_fill_histories, load_instance, save_fill_histories, save_instance,
                       symmetrize_distances, synthetic_city)
from .markers import NEG_INF, POS_INF, is_finite, to_json, to_text
from .measures import FAILED, MEASURE_SOLVER, MeasureReport, compute_measures, measure_table
from .milp import SolverConfig, Status, export_mps, solve_milp
from .models import (VARIANTS, ModelError, build_model, decode_solution, kpis_from_plan_dict)
from .rollhorizon import RhConfig, RollingHorizonError, run_rolling_horizon
from .scentree import (BranchingStructure, ScenarioTree, TreeError, build_bank, fit_tree,
                       stability_batch, validate_tree)

log = logging.getLogger("stochwaste")


class UsageError(Exception):
    """Bad inputs: reported on stderr with exit status 2."""


# -- manifest -----------------------------------------------------------------------

def sha256_of(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int
    config: dict
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    version: str = __version__
    wall_time: float = 0.0
    error_marker: bool = False

    def add_input(self, path) -> None:
        if path is None:
            return
        if not Path(path).is_file():
            raise InstanceError(f"input file not found: {path}")
        self.inputs[str(path)] = sha256_of(path)

    def write(self, out_dir: Path) -> Path:
        target = out_dir / f"{self.command}.manifest.json"
        target.write_text(json.dumps(asdict(self), indent=1, sort_keys=True), encoding="utf-8")
        return target


class Run:
    """Output bookkeeping for one command."""

    def __init__(self, args, command: str):
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()
               if k not in ("func",)}
        self.args = args
        self.manifest = RunManifest(command, args.seed, cfg)
        self.t0 = time.perf_counter()

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return self.record(p)

    def write_json(self, name: str, data) -> Path:
        return self.write_text(name, json.dumps(data, indent=1, ensure_ascii=False) + "\n")

    def record(self, p: Path) -> Path:
        self.manifest.outputs[str(p)] = sha256_of(p)
        return p

    def finish(self, error: bool) -> int:
        self.manifest.wall_time = time.perf_counter() - self.t0
        self.manifest.error_marker = bool(error)
        self.manifest.write(self.out_dir)
        return 1 if error else 0


# -- shared helpers -----------------------------------------------------------------

def _solver(args, precise: bool = False) -> SolverConfig:
    base = MEASURE_SOLVER if precise else SolverConfig()
    return SolverConfig(time_limit=args.time_limit, relative_gap=base.relative_gap,
                        absolute_gap=base.absolute_gap, seed=args.seed)


def _load_pair(run: Run, instance_path, tree_path, horizon_from_tree: bool = True):
    run.manifest.add_input(instance_path)
    run.manifest.add_input(tree_path)
    tree = ScenarioTree.load(tree_path)
    overrides = {"horizon": tree.T} if horizon_from_tree else None
    inst = load_instance(instance_path, overrides)
    if getattr(run.args, "symmetrize", False):
        inst = inst.with_distances(symmetrize_distances(inst.distances))
    return inst, align_tree(tree, inst)


def align_tree(tree: ScenarioTree, instance) -> ScenarioTree:
    """Order (and if needed restrict) the tree's rate columns to the instance's bins."""
    if tree.bin_ids == instance.bin_ids:
        return tree
    return tree.select_bins(instance.bin_ids)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return to_text(v) if not is_finite(v) else str(v)


def _daily_rates(histories_path):
    hist = load_fill_histories(histories_path)
    return {b: derive_accumulation_trajectories(h) for b, h in hist.items()}


# -- subcommands --------------------------------------------------------------------

def cmd_synth(args) -> int:
    run = Run(args, "synth")
    city = synthetic_city(args.bins, seed=args.seed, weeks=args.weeks,
                          days_per_week=args.days_per_week, collections=args.collections)
    inst = city.instance.with_parameters(horizon=args.horizon)
    run.record(save_instance(inst, run.path(args.name + ".json")))
    run.record(save_fill_histories(city.histories, run.path(args.name + ".histories.csv")))
    print(f"synthetic city: {inst.n_bins} bins, {len(next(iter(city.histories.values())).days)} "
          f"collection days per bin")
    return run.finish(False)


def cmd_draw_instance(args) -> int:
    run = Run(args, "draw-instance")
    run.manifest.add_input(args.master)
    master = load_instance(args.master)
    if args.horizon is not None:
        master = master.with_parameters(horizon=args.horizon)
    for n in args.bins:
        for d in range(1, args.draws + 1):
            inst = draw_instance(master, n, d, seed=args.seed)
            run.record(save_instance(inst, run.path(inst.name + ".json")))
            print(inst.name)
    return run.finish(False)


def cmd_gen_tree(args) -> int:
    run = Run(args, "gen-tree")
    structure = BranchingStructure.parse(args.structure)
    run.manifest.add_input(args.histories)
    daily = _daily_rates(args.histories)
    bin_ids = None
    if args.instance is not None:
        run.manifest.add_input(args.instance)
        bin_ids = load_instance(args.instance).bin_ids
    bank = build_bank(daily, structure.T, bin_ids)
    tree = fit_tree(bank, structure, args.iterations, seed=args.seed)
    diag = validate_tree(tree)
    run.record(tree.save(run.path(args.output)))
    run.write_json("tree_diagnostics.json", {
        "structure": str(structure), "scenarios": structure.n_scenarios, "nodes": tree.n_nodes,
        "bins": len(tree.bin_ids), "observations": bank.n_obs,
        "stage_mass": {str(t): m for t, m in diag.stage_mass.items()}, "violations": diag.violations})
    for v in diag.violations:
        print(f"violation: {v}", file=sys.stderr)
    print(f"tree {structure}: {structure.n_scenarios} scenarios, {tree.n_nodes} nodes, "
          f"{len(tree.bin_ids)} bins -> {run.path(args.output)}")
    return run.finish(not diag.ok)


def _solve_report(problem, sol, inst, tree):
    rep = {"status": sol.status.value, "objective": sol.objective, "bound": sol.bound,
           "gap": sol.gap, "nodes": sol.nodes, "wall_time": sol.wall_time,
           "model": problem.size_report(), "kpis": None}
    plan = None
    if sol.has_solution:
        plan = decode_solution(problem, sol, inst, tree)
        rep["kpis"] = plan.kpis()
    return rep, plan


def cmd_solve(args) -> int:
    run = Run(args, "solve")
    inst, tree = _load_pair(run, args.instance, args.tree)
    problem = build_model(inst, tree, args.variant, tighten_big_m=args.tighten_big_m)
    if args.export_mps:
        exp = export_mps(problem)
        run.record(exp.write(run.path(args.export_mps)))
        if exp.renamed:
            run.record(exp.sidecar_path(run.path(args.export_mps)))
    sol = solve_milp(problem, _solver(args))
    rep, plan = _solve_report(problem, sol, inst, tree)
    rep.update(instance=inst.name, variant=args.variant, scenarios=int(len(tree.leaves)))
    if plan is not None:
        plan_path = run.record(plan.save(run.path("plan.json")))
        saved = json.loads(plan_path.read_text(encoding="utf-8"))
        rep["kpi_recheck"] = kpis_from_plan_dict(saved, inst.parameters.R, inst.parameters.C) == saved["kpis"]
    error = sol.status != Status.OPTIMAL or (plan is not None and not rep["kpi_recheck"])
    rep["error_marker"] = error
    run.write_json("solve_report.json", rep)
    print(f"{inst.name} [{args.variant}] status={sol.status.value} objective={_fmt(sol.objective)}")
    if rep["kpis"]:
        k = rep["kpis"]
        print(f"  profit {k['profit']:.2f}  collected {k['expected_collected_kg']:.1f} kg  "
              f"distance {k['total_distance_km']:.2f} km  kg/km "
              f"{'n/a' if k['kg_per_km'] is None else format(k['kg_per_km'], '.2f')}")
    return run.finish(error)


def cmd_export_mps(args) -> int:
    run = Run(args, "export-mps")
    inst, tree = _load_pair(run, args.instance, args.tree)
    problem = build_model(inst, tree, args.variant, tighten_big_m=args.tighten_big_m)
    exp = export_mps(problem)
    run.record(exp.write(run.path(args.output)))
    if exp.renamed:
        run.record(exp.sidecar_path(run.path(args.output)))
    counts = dict(problem.size_report(), columns=len(exp.column_names), rows=len(exp.row_names))
    run.write_json("mps_counts.json", counts)
    print(json.dumps(counts))
    return run.finish(False)


def cmd_roll(args) -> int:
    run = Run(args, "roll")
    inst, tree = _load_pair(run, args.instance, args.tree)
    T = tree.T
    for W in args.window:
        if not 1 <= W <= T - 2:
            raise UsageError(f"window W={W} out of range 1..{T - 2} for T={T}")
    tl = args.tl if args.tl is not None else args.time_limit
    error = False
    baseline = {"profit": args.rp, "cpu": args.rp_cpu, "status": "supplied"}
    if args.rp is None:
        problem = build_model(inst, tree, args.variant, tighten_big_m=args.tighten_big_m)
        t0 = time.perf_counter()
        sol = solve_milp(problem, _solver(args))
        baseline = {"profit": sol.objective if sol.has_solution else None,
                    "cpu": time.perf_counter() - t0, "status": sol.status.value, "gap": sol.gap}
        if not sol.has_solution:
            error = True
    series = []
    reports = []
    rp = baseline["profit"]
    for W in args.window:
        cfg = RhConfig(window=W, time_limit=tl, variant=args.variant,
                       solver=SolverConfig(seed=args.seed), tighten_big_m=args.tighten_big_m)
        res = run_rolling_horizon(inst, tree, cfg)
        cpu = res.trace.wall_time
        if not is_finite(res.profit):
            reduction = POS_INF
            if res.trace.failure and "infeasible" not in res.trace.failure:
                error = True
        elif rp is None or rp <= 0:
            reduction = None
        else:
            reduction = (rp - res.profit) / rp
            if abs(reduction) <= 1e-9:
                reduction = 0.0
        cpu_red = (baseline["cpu"] - cpu) / baseline["cpu"] if baseline["cpu"] else None
        rep = res.to_dict()
        rep.update(window=W, profit_reduction=to_json(reduction), cpu_time=cpu,
                   cpu_time_reduction=cpu_red)
        reports.append(rep)
        series.append((W, res.profit, reduction, cpu, cpu_red))
        if res.plan is not None:
            run.record(res.plan.save(run.path(f"rh_plan_W{W}.json")))
        print(f"W={W}: z_RH={to_text(res.profit)} reduction={to_text(reduction, '{:.4%}')} "
              f"cpu={cpu:.2f}s" + (f" ({res.trace.failure})" if res.trace.failure else ""))
    run.write_json("rh_report.json", {"instance": inst.name, "variant": args.variant,
                                      "time_limit": tl, "baseline": baseline, "runs": reports,
                                      "error_marker": error})
    buf = ["window,z_rh,profit_reduction,cpu_time,cpu_time_reduction"]
    buf += [",".join(_fmt(v) for v in row) for row in series]
    run.write_text("rh_series.csv", "\n".join(buf) + "\n")
    return run.finish(error)


def _measure_jobs(args):
    if args.batch is None:
        if args.instance is None or args.tree is None:
            raise UsageError("measures needs --instance and --tree, or --batch DIR")
        return [(Path(args.instance), Path(args.tree))]
    batch = Path(args.batch)
    if not batch.is_dir():
        raise UsageError(f"batch directory not found: {batch}")
    jobs = []
    for p in sorted(batch.glob("inst_*_*.json")):
        if p.name.endswith(".tree.json"):
            continue
        own = p.with_name(p.stem + ".tree.json")
        tree = own if own.exists() else (Path(args.tree) if args.tree else None)
        if tree is None:
            raise UsageError(f"no tree for {p.name}: add {own.name} or pass --tree")
        jobs.append((p, tree))
    if not jobs:
        raise UsageError(f"no inst_<draw>_<bins>.json files in {batch}")
    return jobs


def _size_summary(reports: list[MeasureReport], sizes: list[int]) -> str:
    """Mean of every table row per size class; infinite cells are counted, not averaged."""
    groups = defaultdict(list)
    for r, n in zip(reports, sizes):
        groups[n].append(r)
    labels = [lab for lab, _ in reports[0].rows()]
    out = []
    out.append(["measure"] + [f"{n} bins (mean of {len(groups[n])})" for n in sorted(groups)])
    for lab in labels:
        row = [lab]
        for n in sorted(groups):
            vals = [dict(r.rows()).get(lab) for r in groups[n]]
            fin = [v for v in vals if v is not None and v != FAILED and is_finite(v)]
            inf = sum(1 for v in vals if v is not None and v != FAILED and not is_finite(v))
            bad = sum(1 for v in vals if v == FAILED)
            if not fin:
                cell = "∞" if inf else ("error" if bad else "n/a")
            else:
                m = float(np.mean(fin))
                cell = f"{100 * m:.0f}%" if lab.startswith("%") else f"{m:.2f}"
            if fin and inf:
                cell += f" [{inf}x∞]"
            if bad:
                cell += f" [{bad} error]"
            row.append(cell)
        out.append(row)
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(out)
    return buf.getvalue()


def cmd_measures(args) -> int:
    run = Run(args, "measures")
    jobs = _measure_jobs(args)
    reports, sizes = [], []
    for inst_path, tree_path in jobs:
        inst, tree = _load_pair(run, inst_path, tree_path)
        rep = compute_measures(inst, tree, args.variant, _solver(args, precise=True), name=inst.name)
        reports.append(rep)
        sizes.append(inst.n_bins)
        print(f"{inst.name}: RP={to_text(rep.RP)} EV={to_text(rep.EV)} WS={to_text(rep.WS)}")
    run.write_text("measures.csv", measure_table(reports))
    run.write_json("measures.json", [r.to_dict() for r in reports])
    series = ["instance,measure,stage,value"]
    for r in reports:
        for lab, v in r.rows()[3:]:
            name, _, t = lab.partition("^")
            series.append(f"{r.name},{name.lstrip('%')},{t},{_fmt(to_json(v)) if v != FAILED else FAILED}")
    run.write_text("measures_series.csv", "\n".join(series) + "\n")
    if args.batch is not None:
        run.write_text("measures_summary.csv", _size_summary(reports, sizes))
    return run.finish(any(r.has_error_marker for r in reports))


def cmd_stability(args) -> int:
    run = Run(args, "stability")
    run.manifest.add_input(args.histories)
    run.manifest.add_input(args.instance)
    daily = _daily_rates(args.histories)
    base = load_instance(args.instance)
    structures = [BranchingStructure.parse(s) for s in args.structures]
    solver = _solver(args)

    def hook(tree: ScenarioTree) -> dict:
        inst = base.with_parameters(horizon=tree.T)
        problem = build_model(inst, tree, args.variant)
        sol = solve_milp(problem, solver)
        if not sol.has_solution:
            return {"profit": NEG_INF, "weight": 0.0, "distance": 0.0, "cpu": sol.wall_time}
        plan = decode_solution(problem, sol, inst, tree)
        return {"profit": sol.objective, "weight": plan.expected_collected_kg,
                "distance": plan.total_distance_km, "cpu": sol.wall_time}

    rows = []
    for k, st in enumerate(structures):
        bank = build_bank(daily, st.T, base.bin_ids)
        rows += stability_batch(bank, [st], args.runs, hook, args.iterations, seed=args.seed + 7919 * k)
    header = ["structure", "scenarios", "nodes", "runs", "failures", "mean_profit", "profit_spread",
              "mean_weight_kg", "mean_distance_km", "mean_cpu_s", "multistage_distance"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in (r.structure, r.scenarios, r.nodes, r.runs, r.failures,
                                                   r.mean_profit, r.profit_spread, r.mean_weight,
                                                   r.mean_distance, r.mean_cpu, r.multistage_distance)))
        print(f"{r.structure}: mean profit {to_text(r.mean_profit)} over {r.runs} runs "
              f"({r.failures} failed)")
    run.write_text("stability.csv", "\n".join(lines) + "\n")
    run.write_json("stability.json", [r.to_dict() for r in rows])
    return run.finish(any(r.failures for r in rows))


# -- parser -------------------------------------------------------------------------

SYM_HELP = "replace distances by (d_ij + d_ji) / 2 (needed for Msym on asymmetric data)"


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    def default(v):
        return argparse.SUPPRESS if suppress else v

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=default(0))
    common.add_argument("--time-limit", type=float, default=default(None),
                        help="solver time limit (s)")
    common.add_argument("--variant", choices=VARIANTS, default=default("M"))
    common.add_argument("--out-dir", default=default("."), help="directory for all outputs")
    common.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochwaste", parents=[_global_flags(False)],
                                     description="Stochastic inventory routing for waste collection.")
    sub = parser.add_subparsers(dest="command", required=True)
    # global flags are accepted after the subcommand too, without resetting earlier values
    glob = dict(parents=[_global_flags(True)])

    p = sub.add_parser("synth", help="synthetic city with fill histories", **glob)
    p.add_argument("--bins", type=int, default=121)
    p.add_argument("--weeks", type=int, default=15)
    p.add_argument("--days-per-week", type=int, default=6)
    p.add_argument("--collections", type=int, default=20)
    p.add_argument("--horizon", type=int, default=6)
    p.add_argument("--name", default="city")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("draw-instance", help="random sub-instances inst_<draw>_<bins>", **glob)
    p.add_argument("--master", required=True)
    p.add_argument("--bins", type=int, nargs="+", required=True)
    p.add_argument("--draws", type=int, default=1)
    p.add_argument("--horizon", type=int, default=None)
    p.set_defaults(func=cmd_draw_instance)

    p = sub.add_parser("gen-tree", help="fit a scenario tree to fill histories", **glob)
    p.add_argument("--histories", required=True)
    p.add_argument("--structure", required=True, help='branching string such as "1x2x2x2x2x2"')
    p.add_argument("--iterations", type=int, default=10000)
    p.add_argument("--instance", default=None, help="restrict to this instance's bins")
    p.add_argument("--output", default="tree.json")
    p.set_defaults(func=cmd_gen_tree)

    for name, func, helptext in (("solve", cmd_solve, "solve the multi-stage model"),
                                 ("export-mps", cmd_export_mps, "write the model as MPS")):
        p = sub.add_parser(name, help=helptext, **glob)
        p.add_argument("--instance", required=True)
        p.add_argument("--tree", required=True)
        p.add_argument("--tighten-big-m", action="store_true")
        p.add_argument("--symmetrize", action="store_true", help=SYM_HELP)
        if name == "solve":
            p.add_argument("--export-mps", default=None, metavar="FILE")
        else:
            p.add_argument("--output", default="model.mps")
        p.set_defaults(func=func)

    p = sub.add_parser("roll", help="rolling-horizon heuristic", **glob)
    p.add_argument("--instance", required=True)
    p.add_argument("--tree", required=True)
    p.add_argument("-W", "--window", type=int, nargs="+", required=True)
    p.add_argument("--tl", type=float, default=None, help="total RH time budget (s)")
    p.add_argument("--rp", type=float, default=None, help="baseline profit; solved if omitted")
    p.add_argument("--rp-cpu", type=float, default=None, help="baseline CPU seconds")
    p.add_argument("--tighten-big-m", action="store_true")
    p.add_argument("--symmetrize", action="store_true", help=SYM_HELP)
    p.set_defaults(func=cmd_roll)

    p = sub.add_parser("measures", help="stochastic measures (single instance or batch)", **glob)
    p.add_argument("--instance", default=None)
    p.add_argument("--tree", default=None, help="tree file; in batch mode the fallback tree")
    p.add_argument("--batch", default=None, metavar="DIR")
    p.add_argument("--symmetrize", action="store_true", help=SYM_HELP)
    p.set_defaults(func=cmd_measures)

    p = sub.add_parser("stability", help="in-sample stability of tree structures", **glob)
    p.add_argument("--histories", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--structures", nargs="+", required=True)
    p.add_argument("--runs", type=int, default=5)
    p.add_argument("--iterations", type=int, default=10000)
    p.set_defaults(func=cmd_stability)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (InstanceError, TreeError, ModelError, RollingHorizonError, OSError, ValueError) as exc:
        print(f"stochwaste {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
