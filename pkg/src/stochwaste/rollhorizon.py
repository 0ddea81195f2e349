"""Rolling-horizon heuristic with inventory hand-off and a rolled-over time budget.

Step ``k`` (``k = 1..T-1``) solves the model on stages ``k..min(k+W, T)``
over the forest of subtrees rooted at every stage-``k`` node, with the root
inventories fixed to what earlier steps stored.  Routing at stage ``k`` is
shared by all those roots (it is decided before stage ``k+1`` is observed).
The step keeps ``x^k``, ``y^k`` and the flows, collections and inventories
of the stage-``k+1`` nodes.  Once all steps are done the stored pieces form
an assignment of the full model, whose objective is the heuristic's profit.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .instance import Instance
from .markers import NEG_INF, to_json
from .milp import MilpError, SolverConfig, Status, solve_milp
from .models import CollectionPlan, ModelError, build_model, decode_solution
from .scentree import ScenarioTree

log = logging.getLogger(__name__)


class RollingHorizonError(ValueError):
    pass


# -- time budget --------------------------------------------------------------------

def time_budget_schedule(total: float, count: int, used=None) -> list[float]:
    """Per-subproblem budgets: an equal share plus everything left over so far.

    With ``used`` (seconds actually consumed by the first subproblems) the
    budget of subproblem ``k`` is ``(k + 1) * total / count - sum(used[:k])``;
    without it every subproblem gets ``total / count``.
    """
    if not total > 0:
        raise ValueError("total time must be positive")
    if count < 1:
        raise ValueError("count must be >= 1")
    share = total / count
    if used is None:
        return [share] * count
    used = list(used)
    if len(used) > count:
        raise ValueError("more used times than subproblems")
    budgets = []
    spent = 0.0
    for k in range(count):
        budgets.append((k + 1) * share - spent)
        if k < len(used):
            spent += used[k]
    return budgets


@dataclass
class TimeBudget:
    """Running budget: call :meth:`next_budget`, then :meth:`record` the time used."""

    total: float
    count: int
    used: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not self.total > 0 or self.count < 1:
            raise ValueError("total must be positive and count >= 1")

    @property
    def share(self) -> float:
        return self.total / self.count

    def next_budget(self) -> float:
        k = len(self.used)
        if k >= self.count:
            raise ValueError("all subproblems already ran")
        return max(0.0, (k + 1) * self.share - sum(self.used))

    def record(self, seconds: float) -> float:
        """Store the time used; returns the leftover carried forward."""
        budget = self.next_budget()
        self.used.append(float(seconds))
        return budget - float(seconds)

    @property
    def consumed(self) -> float:
        return float(sum(self.used))


def simulate_budget(total: float, demands) -> list[tuple[float, float]]:
    """Replay a timing trace: subproblem ``k`` wants ``demands[k]`` seconds and is
    stopped at its budget.  Returns ``(budget, used)`` per subproblem."""
    demands = list(demands)
    tb = TimeBudget(total, len(demands))
    out = []
    for want in demands:
        b = tb.next_budget()
        use = min(float(want), b)
        tb.record(use)
        out.append((b, use))
    return out


# -- configuration and trace --------------------------------------------------------

@dataclass(frozen=True)
class RhConfig:
    window: int = 1
    time_limit: float | None = None
    variant: str = "M"
    solver: SolverConfig = field(default_factory=SolverConfig)
    tighten_big_m: bool = False

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window W must be >= 1")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError("time_limit must be positive")

    def check_horizon(self, T: int) -> None:
        if not 1 <= self.window < T - 1:
            raise RollingHorizonError(f"window W={self.window} outside 1..{T - 2} for T={T}")


@dataclass
class RhStep:
    first_stage: int
    last_stage: int
    status: str
    objective: float | None
    wall_time: float
    budget: float | None
    leftover: float | None
    visits: tuple[int, ...] = ()
    arcs: tuple[tuple[int, int], ...] = ()
    root_inventory: dict[int, list[float]] = field(default_factory=dict)
    stored_inventory: dict[int, list[float]] = field(default_factory=dict)
    stored_collection: dict[int, list[float]] = field(default_factory=dict)
    gap: float | None = None


@dataclass
class RhTrace:
    window: int
    variant: str
    steps: list[RhStep] = field(default_factory=list)
    failure: str | None = None

    @property
    def wall_time(self) -> float:
        return sum(s.wall_time for s in self.steps)

    def to_dict(self) -> dict:
        return {"window": self.window, "variant": self.variant, "failure": self.failure,
                "wall_time": self.wall_time,
                "steps": [{k: (list(map(list, v)) if k == "arcs" else v)
                           for k, v in s.__dict__.items()} for s in self.steps]}

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")
        return path


@dataclass
class RhResult:
    profit: object                 # float or NEG_INF
    plan: CollectionPlan | None
    trace: RhTrace
    assignment: np.ndarray | None = None

    def __iter__(self):
        return iter((self.profit, self.plan, self.trace))

    def to_dict(self) -> dict:
        return {"profit": to_json(self.profit),
                "kpis": self.plan.kpis() if self.plan is not None else None,
                "trace": self.trace.to_dict()}


# -- subtree restriction ------------------------------------------------------------

def subtree_restriction(tree: ScenarioTree, first_stage: int, last_stage: int) -> list[tuple[int, ScenarioTree]]:
    """One re-rooted tree per stage-``first_stage`` node, spanning the given stages.

    Probabilities are conditional on the new root; the root keeps its original
    rates (they are history, not uncertainty, for the restricted problem).
    """
    if not 1 <= first_stage < last_stage <= tree.T:
        raise RollingHorizonError(f"empty or invalid stage span {first_stage}..{last_stage}")
    out = []
    for r in tree.nodes_at(first_stage):
        nodes = [int(r)]
        frontier = [int(r)]
        for _ in range(first_stage, last_stage):
            frontier = [int(c) for p in frontier for c in tree.children(p)]
            nodes.extend(frontier)
        remap = {n: k for k, n in enumerate(nodes)}
        parent = np.array([-1] + [remap[int(tree.parent[n])] for n in nodes[1:]])
        stage = tree.stage[nodes] - first_stage + 1
        base = tree.prob[r]
        prob = tree.prob[nodes] / base if base > 0 else np.where(np.arange(len(nodes)) == 0, 1.0, 0.0)
        rates = tree.rates[nodes].copy()
        rates[0] = 0.0
        out.append((int(r), ScenarioTree(parent, stage, prob, rates, tree.bin_ids)))
    return out


# -- the heuristic ------------------------------------------------------------------

def run_rolling_horizon(instance: Instance, tree: ScenarioTree, config: RhConfig | None = None) -> RhResult:
    """Run the rolling horizon; the profit is ``NEG_INF`` if any step fails.

    Returns an :class:`RhResult` that also unpacks as ``(profit, plan, trace)``.
    """
    cfg = config or RhConfig()
    T = tree.T
    if T != instance.T:
        raise RollingHorizonError(f"tree has {T} stages, instance horizon is {instance.T}")
    cfg.check_horizon(T)
    N = instance.n_bins
    full = build_model(instance, tree, cfg.variant, tighten_big_m=cfg.tighten_big_m)
    xfull = np.zeros(full.num_vars)
    trace = RhTrace(cfg.window, cfg.variant)
    budget = TimeBudget(cfg.time_limit, T - 1) if cfg.time_limit is not None else None
    u_store = np.full((tree.n_nodes, N), np.nan)
    u_store[0] = instance.initial_kg
    xfull[full.labels["u"][0]] = instance.initial_kg
    FL = full.labels
    for k in range(1, T):
        last = min(k + cfg.window, T)
        roots = tree.nodes_at(k)
        root_inv = u_store[roots]
        sub = build_model(instance, tree, cfg.variant, first_stage=k, last_stage=last,
                          root_inventory=root_inv, tighten_big_m=cfg.tighten_big_m)
        solver = cfg.solver
        b = None
        if budget is not None:
            b = budget.next_budget()
            solver = replace(cfg.solver, time_limit=max(b, 1e-3))
        t0 = time.perf_counter()
        try:
            sol = solve_milp(sub, solver)
        except MilpError as exc:
            raise RollingHorizonError(f"stages {k}..{last}: {exc}") from exc
        used = time.perf_counter() - t0
        leftover = budget.record(min(used, b)) if budget is not None else None
        step = RhStep(k, last, sol.status.value, sol.objective if sol.has_solution else None, used, b,
                      leftover, gap=sol.gap,
                      root_inventory={int(r): root_inv[q].tolist() for q, r in enumerate(roots)})
        trace.steps.append(step)
        if not sol.has_solution:
            trace.failure = (f"stages {k}..{last}: " +
                             ("infeasible" if sol.status == Status.INFEASIBLE
                              else f"{sol.status.value} without a feasible solution"))
            log.info("rolling horizon stopped: %s", trace.failure)
            return RhResult(NEG_INF, None, trace)
        xs = sol.x
        L = sub.labels
        # stage-k routing: first x-stage of the window
        xk = np.where(L["x"][0] >= 0, xs[np.maximum(L["x"][0], 0)], 0.0)
        yk = xs[L["y"][0]]
        xk_r = np.round(xk)
        yk_r = np.round(yk)
        ok = FL["x"][k - 1] >= 0
        xfull[FL["x"][k - 1][ok]] = xk_r[ok]
        xfull[FL["y"][k - 1]] = yk_r
        step.visits = tuple(int(instance.bin_ids[i]) for i in np.flatnonzero(yk_r > 0.5))
        step.arcs = tuple((int(i), int(j)) for i, j in zip(*np.nonzero(xk_r > 0.5)))
        # stage-(k+1) node quantities
        pos = sub.meta["position"]
        for n in tree.nodes_at(k + 1):
            p = pos[n]
            u = xs[L["u"][p]]
            w = xs[L["w"][p]]
            u_store[n] = u
            xfull[FL["u"][n]] = u
            xfull[FL["w"][n]] = w
            fsub = L["f"][p]
            has = fsub >= 0
            xfull[FL["f"][n][has]] = xs[fsub[has]]
            step.stored_inventory[int(n)] = u.tolist()
            step.stored_collection[int(n)] = w.tolist()
    viol = full.max_violation(xfull)
    if viol > 1e-5 * max(1.0, instance.parameters.Q):
        raise RollingHorizonError(f"assembled plan violates the full model by {viol:.3g}")
    profit = full.objective(xfull)
    plan = decode_solution(full, xfull, instance, tree, tol=1e-5)
    return RhResult(float(profit), plan, trace, xfull)
