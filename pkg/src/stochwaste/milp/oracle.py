"""Exhaustive enumeration oracle for micro MILPs.

Every assignment of the integer variables is considered.  Assignments that a
row cannot accept for *any* value of the continuous variables (interval
arithmetic over their bounds) are discarded without an LP; every remaining
assignment is completed by the in-house simplex.  This is exact by
construction and shares nothing with branch-and-bound beyond the problem
data.
"""

from __future__ import annotations

import itertools
import time

import numpy as np

from .problem import EQ, GE, LE, MilpError, MilpProblem, MilpSolution, Status
from .simplex import simplex_solve

DEFAULT_MAX_BINARIES = 24
_CHUNK = 1 << 14


def _candidate_masks(problem: MilpProblem, int_idx, domains):
    """Yield chunks of integer assignments that pass the interval row test."""
    A = problem.A
    A_int = A[:, int_idx].toarray()
    cont = np.flatnonzero(~problem.integer)
    A_c = A[:, cont].toarray()
    lo_c, hi_c = problem.lb[cont], problem.ub[cont]
    with np.errstate(invalid="ignore"):
        pos = np.where(A_c > 0, A_c, 0.0)
        neg = np.where(A_c < 0, A_c, 0.0)
        # min/max of the continuous part of each row; 0 * inf is treated as 0
        lo_term = np.where(pos != 0, pos * lo_c, 0.0) + np.where(neg != 0, neg * hi_c, 0.0)
        hi_term = np.where(pos != 0, pos * hi_c, 0.0) + np.where(neg != 0, neg * lo_c, 0.0)
    cmin = lo_term.sum(axis=1)
    cmax = hi_term.sum(axis=1)
    tol = 1e-9 * (1.0 + np.abs(problem.rhs))
    sense = problem.sense
    combos = itertools.product(*domains)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            return
        Z = np.asarray(chunk, dtype=float)
        act = Z @ A_int.T  # (chunk, rows)
        lo = act + cmin
        hi = act + cmax
        ok = np.ones(len(Z), dtype=bool)
        le = sense == LE
        ge = sense == GE
        eq = sense == EQ
        if le.any():
            ok &= (lo[:, le] <= problem.rhs[le] + tol[le]).all(axis=1)
        if ge.any():
            ok &= (hi[:, ge] >= problem.rhs[ge] - tol[ge]).all(axis=1)
        if eq.any():
            ok &= ((lo[:, eq] <= problem.rhs[eq] + tol[eq]) & (hi[:, eq] >= problem.rhs[eq] - tol[eq])).all(axis=1)
        yield Z[ok]


def enumerate_oracle(problem: MilpProblem, max_binaries: int = DEFAULT_MAX_BINARIES) -> MilpSolution:
    """Solve ``problem`` by brute force over its integer variables.

    Refuses (``MilpError``) when the problem has more than ``max_binaries``
    integer variables or an integer variable with an infinite or wide domain.
    Among equally good assignments the lexicographically first one wins.
    """
    t0 = time.perf_counter()
    int_idx = np.flatnonzero(problem.integer)
    if len(int_idx) > max_binaries:
        raise MilpError(f"{len(int_idx)} integer variables exceed the oracle limit of {max_binaries}")
    domains = []
    for j in int_idx:
        lo, hi = np.ceil(problem.lb[j] - 1e-9), np.floor(problem.ub[j] + 1e-9)
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi - lo > 16:
            raise MilpError(f"integer variable {problem.names[j]} has a domain too wide to enumerate")
        if hi < lo:
            return MilpSolution(Status.INFEASIBLE, wall_time=time.perf_counter() - t0)
        domains.append(range(int(lo), int(hi) + 1))

    best_obj, best_x = None, None
    lp_count = 0
    iters = 0
    unbounded = False
    for Z in _candidate_masks(problem, int_idx, domains):
        for z in Z:
            lb, ub = problem.lb.copy(), problem.ub.copy()
            lb[int_idx] = z
            ub[int_idx] = z
            res = simplex_solve(problem, lb, ub)
            lp_count += 1
            iters += res.iterations
            if res.status == "unbounded":
                unbounded = True
                continue
            if res.status != "optimal":
                continue
            if best_obj is None or res.objective > best_obj + 1e-12:
                best_obj, best_x = res.objective, res.x
    wall = time.perf_counter() - t0
    if unbounded:
        return MilpSolution(Status.UNBOUNDED, nodes=lp_count, lp_iterations=iters, wall_time=wall)
    if best_x is None:
        return MilpSolution(Status.INFEASIBLE, nodes=lp_count, lp_iterations=iters, wall_time=wall)
    return MilpSolution(Status.OPTIMAL, best_obj, best_x, best_obj, 0.0, lp_count, iters, wall)
