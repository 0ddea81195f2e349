"""Best-bound branch-and-bound over LP relaxations."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .lp import BACKENDS, solve_lp
from .problem import MilpError, MilpProblem, MilpSolution, Status, relative_gap

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    time_limit: float | None = None
    relative_gap: float = 1e-6
    absolute_gap: float = 1e-9
    feasibility_tol: float = 1e-6
    integrality_tol: float = 1e-6
    node_selection: str = "best-bound"
    branching: str = "most-fractional"
    seed: int = 0
    lp_backend: str = "highs"
    max_nodes: int | None = None

    def __post_init__(self):
        for name in ("relative_gap", "absolute_gap", "feasibility_tol", "integrality_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError("time_limit must be positive or None")
        if self.node_selection != "best-bound":
            raise ValueError("only best-bound node selection is implemented")
        if self.branching != "most-fractional":
            raise ValueError("only most-fractional branching is implemented")
        if self.lp_backend not in BACKENDS:
            raise ValueError(f"lp_backend must be one of {BACKENDS}")


def _pick_branch_var(x, int_idx, tol):
    frac = x[int_idx] - np.floor(x[int_idx])
    dist = np.minimum(frac, 1.0 - frac)
    if dist.size == 0 or dist.max() <= tol:
        return None
    # argmax returns the lowest index among equally fractional candidates
    return int(int_idx[int(np.argmax(dist))])


def _polish(problem, x, lb, ub, cfg):
    """Fix integers at their rounded values and re-solve the continuous part."""
    int_idx = np.flatnonzero(problem.integer)
    r = np.round(x[int_idx])
    plb, pub = lb.copy(), ub.copy()
    plb[int_idx] = r
    pub[int_idx] = r
    res = solve_lp(problem, plb, pub, cfg.lp_backend)
    if res.status != "optimal" or problem.max_violation(res.x) > cfg.feasibility_tol:
        return None, res.iterations
    return res, res.iterations


def solve_milp(problem: MilpProblem, config: SolverConfig | None = None) -> MilpSolution:
    """Maximise ``problem`` exactly (up to the configured gap tolerances).

    Nodes are explored best-bound first; equal bounds are broken in favour of
    the deeper node and then the most recently created one, which makes the
    search dive when the relaxation is tight.  Branching picks the most
    fractional integer variable, lowest index on ties.  Every integral LP
    point is polished by fixing the integers and re-solving, so returned
    assignments have exactly integral integer components.
    """
    cfg = config or SolverConfig()
    t0 = time.perf_counter()
    int_idx = np.flatnonzero(problem.integer)
    lb0 = problem.lb.copy()
    ub0 = problem.ub.copy()
    lb0[int_idx] = np.ceil(lb0[int_idx] - cfg.integrality_tol)
    ub0[int_idx] = np.floor(ub0[int_idx] + cfg.integrality_tol)

    lp_iters = 0
    nodes = 0
    incumbent = None
    inc_obj = -math.inf
    counter = itertools.count()

    root = solve_lp(problem, lb0, ub0, cfg.lp_backend)
    lp_iters += root.iterations
    nodes += 1
    if root.status == "infeasible":
        return MilpSolution(Status.INFEASIBLE, nodes=nodes, lp_iterations=lp_iters,
                            wall_time=time.perf_counter() - t0)
    if root.status == "unbounded":
        return MilpSolution(Status.UNBOUNDED, nodes=nodes, lp_iterations=lp_iters,
                            wall_time=time.perf_counter() - t0)

    def tolerance(obj):
        return max(cfg.absolute_gap, cfg.relative_gap * max(1e-10, abs(obj)))

    # heap entries: (-bound, -depth, -seq, lb_changes, ub_changes, lp result or None)
    heap = [(-root.objective, 0, -next(counter), (), (), root)]
    timed_out = False
    while heap:
        if cfg.time_limit is not None and time.perf_counter() - t0 > cfg.time_limit:
            timed_out = True
            break
        if cfg.max_nodes is not None and nodes >= cfg.max_nodes:
            timed_out = True
            break
        neg_bound, neg_depth, _, lch, uch, res = heapq.heappop(heap)
        if incumbent is not None and -neg_bound <= inc_obj + tolerance(inc_obj):
            continue
        lb, ub = lb0.copy(), ub0.copy()
        for j, v in lch:
            lb[j] = v
        for j, v in uch:
            ub[j] = v
        if res is None:
            res = solve_lp(problem, lb, ub, cfg.lp_backend)
            lp_iters += res.iterations
            nodes += 1
            if res.status == "infeasible":
                continue
            if res.status == "unbounded":
                # an integer restriction of an unbounded relaxation
                return MilpSolution(Status.UNBOUNDED, nodes=nodes, lp_iterations=lp_iters,
                                    wall_time=time.perf_counter() - t0)
            if incumbent is not None and res.objective <= inc_obj + tolerance(inc_obj):
                continue
        j = _pick_branch_var(res.x, int_idx, cfg.integrality_tol)
        if j is None:
            pol, it = _polish(problem, res.x, lb, ub, cfg)
            lp_iters += it
            if pol is not None and pol.objective > inc_obj:
                incumbent, inc_obj = pol.x, pol.objective
                log.debug("incumbent %.10g after %d nodes", inc_obj, nodes)
            continue
        v = res.x[j]
        depth = -neg_depth + 1
        down = (lch, uch + ((j, math.floor(v)),))
        up = (lch + ((j, math.ceil(v)),), uch)
        for child in (down, up):
            heapq.heappush(heap, (-res.objective, -depth, -next(counter), child[0], child[1], None))

    wall = time.perf_counter() - t0
    open_bound = max((-h[0] for h in heap), default=-math.inf)
    if incumbent is None:
        if timed_out:
            return MilpSolution(Status.TIME_LIMIT, bound=open_bound, nodes=nodes,
                                lp_iterations=lp_iters, wall_time=wall)
        return MilpSolution(Status.INFEASIBLE, nodes=nodes, lp_iterations=lp_iters, wall_time=wall)
    if timed_out and open_bound > inc_obj + tolerance(inc_obj):
        gap = relative_gap(open_bound, inc_obj)
        return MilpSolution(Status.TIME_LIMIT, inc_obj, incumbent, open_bound, gap,
                            nodes, lp_iters, wall)
    return MilpSolution(Status.OPTIMAL, inc_obj, incumbent, inc_obj, 0.0, nodes, lp_iters, wall)


def fix_variables(problem: MilpProblem, idx, values=None, lower=None) -> MilpProblem:
    """Return a copy with variables ``idx`` fixed to ``values`` or lower-bounded by ``lower``."""
    idx = np.asarray(idx, dtype=np.int64)
    lb, ub = problem.lb.copy(), problem.ub.copy()
    if values is not None:
        values = np.broadcast_to(np.asarray(values, dtype=float), idx.shape)
        lb[idx] = values
        ub[idx] = values
    if lower is not None:
        lower = np.broadcast_to(np.asarray(lower, dtype=float), idx.shape)
        lb[idx] = np.maximum(lb[idx], lower)
    if np.any(lb > ub):
        raise MilpError("fixing produced lb > ub")
    return problem.with_bounds(lb, ub)
