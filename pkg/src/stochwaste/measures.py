"""Stochastic-programming measures for validating the tree-based model.

RP is the tree model's optimal profit, WS the probability-weighted optimum
of the single-scenario problems, EV the optimum of the single path of
stagewise expected rates.  For each stage ``t`` the EV routing is pushed
into the tree model in three ways:

* ``EEV^t``  routing of stages ``<= t`` fixed to the EV values,
* ``MESSV^t`` routing that EV leaves at zero fixed to zero,
* ``MEIV^t`` EV routing imposed as lower bounds.

Infeasible auxiliary problems yield ``NEG_INF`` values and ``POS_INF``
percentage losses; a solver that stops without a proof leaves the cell
marked ``FAILED``.  Percentages are ``(RP - X) / RP`` and are refused
(``None`` with a flag) when ``RP <= 0``.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instance import Instance
from .markers import NEG_INF, POS_INF, is_finite, to_json, to_text
from .milp import MilpProblem, MilpSolution, SolverConfig, Status, fix_variables, solve_milp
from .models import build_model
from .scentree import ScenarioTree

log = logging.getLogger(__name__)

# measures tighter than the default gap so that orderings hold to 1e-6
MEASURE_SOLVER = SolverConfig(relative_gap=1e-9, absolute_gap=1e-9)
SNAP = 1e-9
FAILED = "error"               # per-cell marker for an unresolved auxiliary problem


class MeasureError(RuntimeError):
    pass


def _value(sol: MilpSolution):
    if sol.status == Status.OPTIMAL:
        return float(sol.objective)
    if sol.status == Status.INFEASIBLE:
        return NEG_INF
    log.warning("auxiliary problem ended with status %s", sol.status.value)
    return FAILED


def _snap(x, ref):
    """Treat values within solver noise of ``ref`` as equal to it."""
    if FAILED in (x, ref):
        return x
    if is_finite(x) and is_finite(ref) and abs(x - ref) <= SNAP * max(1.0, abs(ref)):
        return ref
    return x


def loss_ratio(rp, value):
    """``(RP - value) / RP``; ``POS_INF`` for an infeasible value, ``None`` if RP <= 0."""
    if value == FAILED or rp == FAILED:
        return FAILED
    if not is_finite(rp) or rp <= 0:
        return None
    if not is_finite(value):
        return POS_INF if value is NEG_INF else NEG_INF
    return (rp - value) / rp


@dataclass
class EvSolution:
    objective: float
    x: np.ndarray                  # rounded to {0, 1}
    y: np.ndarray


@dataclass
class MeasureReport:
    name: str
    RP: object
    EV: object
    WS: object
    EEV: list = field(default_factory=list)
    MESSV: list = field(default_factory=list)
    MEIV: list = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    ws_excluded: int = 0

    @property
    def T(self) -> int:
        return len(self.EEV) + 1

    @property
    def percentages_available(self) -> bool:
        return self.RP != FAILED and is_finite(self.RP) and self.RP > 0

    @property
    def EVPI(self):
        if self.WS == FAILED:
            return FAILED
        if not self.percentages_available or not is_finite(self.WS):
            return None
        return (self.WS - self.RP) / self.RP

    @property
    def VSS(self) -> list:
        return [loss_ratio(self.RP, v) for v in self.EEV]

    @property
    def MLUSS(self) -> list:
        return [loss_ratio(self.RP, v) for v in self.MESSV]

    @property
    def MLUDS(self) -> list:
        return [loss_ratio(self.RP, v) for v in self.MEIV]

    def absolute_losses(self) -> dict[str, list]:
        def diff(v):
            if FAILED in (v, self.RP):
                return FAILED
            return self.RP - v if is_finite(v) and is_finite(self.RP) else POS_INF
        return {"EEV": [diff(v) for v in self.EEV], "MESSV": [diff(v) for v in self.MESSV],
                "MEIV": [diff(v) for v in self.MEIV]}

    def rows(self) -> list[tuple[str, object]]:
        """Row label and value in table order; percentages as fractions."""
        out = [("RP", self.RP), ("EV", self.EV), ("WS", self.WS), ("%EVPI", self.EVPI)]
        for label, vals in (("%VSS", self.VSS), ("%MLUSS", self.MLUSS), ("%MLUDS", self.MLUDS)):
            out.extend((f"{label}^{t}", v) for t, v in enumerate(vals, start=1))
        return out

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "RP": to_json(self.RP), "EV": to_json(self.EV), "WS": to_json(self.WS),
            "EEV": [to_json(v) for v in self.EEV], "MESSV": [to_json(v) for v in self.MESSV],
            "MEIV": [to_json(v) for v in self.MEIV],
            "percentages": {label: to_json(v) for label, v in self.rows()[3:]},
            "percentages_available": self.percentages_available,
            "ws_excluded_scenarios": self.ws_excluded,
            "notes": self.notes,
        }

    def cells(self) -> list:
        return [self.RP, self.EV, self.WS, *self.EEV, *self.MESSV, *self.MEIV]

    @property
    def has_error_marker(self) -> bool:
        """Unresolved cells, an infeasible RP, or scenarios missing from WS."""
        return (any(c == FAILED for c in self.cells()) or not is_finite(self.RP)
                or self.ws_excluded > 0)


def _cell(label: str, v) -> str:
    if v == FAILED:
        return FAILED
    if v is None:
        return "n/a"
    if not is_finite(v):
        return to_text(v)
    if label.startswith("%"):
        return f"{100 * v:.0f}%"
    return f"{v:.2f}"


def measure_table(reports: list[MeasureReport], delimiter: str = ",") -> str:
    """Rows RP, EV, WS, %EVPI and stage-indexed measures; one column per instance."""
    if not reports:
        return ""
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(["measure"] + [r.name for r in reports])
    labels = [lab for lab, _ in reports[0].rows()]
    per = [dict(r.rows()) for r in reports]
    for lab in labels:
        w.writerow([lab] + [_cell(lab, p.get(lab)) for p in per])
    return buf.getvalue()


# -- auxiliary problems -------------------------------------------------------------

def expected_value_tree(tree: ScenarioTree) -> ScenarioTree:
    return ScenarioTree.single_path(tree.expected_rates(), tree.bin_ids)


def solve_ev(instance: Instance, tree: ScenarioTree, variant: str = "M",
             config: SolverConfig = MEASURE_SOLVER) -> tuple[EvSolution | None, Status]:
    ev_tree = expected_value_tree(tree)
    p = build_model(instance, ev_tree, variant)
    sol = solve_milp(p, config)
    if sol.status != Status.OPTIMAL:
        return None, sol.status
    xv = np.round(p.value_of(sol.x, "x"))
    yv = np.round(p.value_of(sol.x, "y"))
    return EvSolution(float(sol.objective), xv, yv), sol.status


def _ev_values(problem: MilpProblem, ev: EvSolution, t: int) -> tuple[np.ndarray, np.ndarray]:
    xl = problem.labels["x"][:t]
    ok = xl >= 0
    idx = np.concatenate([xl[ok], problem.labels["y"][:t].ravel()])
    val = np.concatenate([ev.x[:t][ok], ev.y[:t].ravel()])
    return idx, val


def _fixed_value(problem: MilpProblem, ev: EvSolution, t: int, mode: str, config: SolverConfig):
    if not 1 <= t < problem.meta["last_stage"]:
        raise MeasureError(f"stage t={t} outside 1..{problem.meta['last_stage'] - 1}")
    idx, val = _ev_values(problem, ev, t)
    if mode == "eev":
        fixed = fix_variables(problem, idx, values=val)
    elif mode == "messv":
        fixed = fix_variables(problem, idx[val < 0.5], values=0.0)
    else:
        fixed = fix_variables(problem, idx, lower=val)
    return _value(solve_milp(fixed, config))


class _Context:
    """RP model and EV solution shared by the stage-indexed measures."""

    def __init__(self, instance, tree, variant, config):
        self.problem = build_model(instance, tree, variant)
        self.ev, self.ev_status = solve_ev(instance, tree, variant, config)
        self.config = config

    def value(self, t: int, mode: str):
        if self.ev is None:
            return NEG_INF if self.ev_status == Status.INFEASIBLE else FAILED
        return _fixed_value(self.problem, self.ev, t, mode, self.config)


def compute_EV_and_EEV(instance: Instance, tree: ScenarioTree, t: int, variant: str = "M",
                       config: SolverConfig = MEASURE_SOLVER):
    """``(EV, EEV^t)``: EV routing of stages ``<= t`` fixed by equality in the tree model."""
    ctx = _Context(instance, tree, variant, config)
    ev = ctx.value(1, "ev") if ctx.ev is None else ctx.ev.objective
    return ev, ctx.value(t, "eev")


def compute_MESSV(instance: Instance, tree: ScenarioTree, t: int, variant: str = "M",
                  config: SolverConfig = MEASURE_SOLVER):
    """Tree model with the routing that EV leaves at zero (stages ``<= t``) fixed to zero."""
    return _Context(instance, tree, variant, config).value(t, "messv")


def compute_MEIV(instance: Instance, tree: ScenarioTree, t: int, variant: str = "M",
                 config: SolverConfig = MEASURE_SOLVER):
    """Tree model with the EV routing of stages ``<= t`` imposed as lower bounds."""
    return _Context(instance, tree, variant, config).value(t, "meiv")


def compute_WS(instance: Instance, tree: ScenarioTree, variant: str = "M",
               config: SolverConfig = MEASURE_SOLVER) -> tuple[object, int]:
    """Probability-weighted optimum of the single-scenario problems.

    Returns ``(WS, excluded)``; infeasible scenarios are excluded from the sum
    and counted.  ``WS`` is ``NEG_INF`` if every scenario is infeasible.
    """
    paths = tree.leaf_paths()
    total, excluded, mass = 0.0, 0, 0.0
    cache: dict[bytes, object] = {}
    for path in paths:
        leaf = path[-1]
        pr = float(tree.prob[leaf])
        rates = tree.rates[path]
        key = rates.tobytes()
        if key not in cache:
            p = build_model(instance, ScenarioTree.single_path(rates, tree.bin_ids), variant)
            cache[key] = _value(solve_milp(p, config))
        v = cache[key]
        if v == FAILED:
            return FAILED, excluded
        if not is_finite(v):
            excluded += 1
            continue
        total += pr * v
        mass += pr
    if mass == 0 and excluded:
        return NEG_INF, excluded
    return total, excluded


def compute_measures(instance: Instance, tree: ScenarioTree, variant: str = "M",
                     config: SolverConfig = MEASURE_SOLVER, name: str | None = None) -> MeasureReport:
    ctx = _Context(instance, tree, variant, config)
    rp = _value(solve_milp(ctx.problem, config))
    rep = MeasureReport(name or instance.name, rp, None, None)
    rep.EV = ctx.value(1, "ev") if ctx.ev is None else _snap(ctx.ev.objective, rp)
    ws, excluded = compute_WS(instance, tree, variant, config)
    rep.WS = _snap(ws, rp)
    rep.ws_excluded = excluded
    if excluded:
        rep.notes.append(f"WS excludes {excluded} infeasible scenario(s)")
    for t in range(1, tree.T):
        rep.EEV.append(_snap(ctx.value(t, "eev"), rp))
        rep.MESSV.append(_snap(ctx.value(t, "messv"), rp))
        rep.MEIV.append(_snap(ctx.value(t, "meiv"), rp))
    if not rep.percentages_available:
        rep.notes.append("RP <= 0 or infeasible: percentage measures refused, see absolute losses")
    return rep


def save_report(report: MeasureReport, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(report.to_dict(), indent=1, ensure_ascii=False), encoding="utf-8")
    return path
