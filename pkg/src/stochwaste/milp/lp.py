"""LP relaxation front end with two interchangeable backends.

``"simplex"`` is the in-house bounded simplex (:mod:`.simplex`); ``"highs"``
delegates to SciPy's HiGHS interface and is what branch-and-bound uses by
default on anything larger than a toy problem.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .problem import EQ, GE, LE, MilpProblem
from .simplex import LPError, LPResult, simplex_solve

BACKENDS = ("simplex", "highs")


def _split_rows(problem: MilpProblem):
    cached = problem.meta.get("_highs_rows")
    if cached is not None:
        return cached
    A = problem.A
    le = problem.sense == LE
    ge = problem.sense == GE
    eq = problem.sense == EQ
    ub_rows = np.flatnonzero(le | ge)
    sign = np.where(ge[ub_rows], -1.0, 1.0)
    A_ub = sp.diags(sign) @ A[ub_rows] if ub_rows.size else None
    b_ub = sign * problem.rhs[ub_rows] if ub_rows.size else None
    eq_rows = np.flatnonzero(eq)
    A_eq = A[eq_rows] if eq_rows.size else None
    b_eq = problem.rhs[eq_rows] if eq_rows.size else None
    cached = (A_ub, b_ub, A_eq, b_eq)
    problem.meta["_highs_rows"] = cached
    return cached


def _highs_solve(problem: MilpProblem, lb, ub) -> LPResult:
    A_ub, b_ub, A_eq, b_eq = _split_rows(problem)
    bounds = np.column_stack([lb, ub])
    if problem.num_vars == 0:
        return LPResult("optimal", np.zeros(0), problem.objective_constant, 0) \
            if _empty_rows_feasible(problem) else LPResult("infeasible", None, None, 0)
    res = linprog(-problem.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status == 0:
        x = np.clip(res.x, lb, ub)
        return LPResult("optimal", x, problem.objective(x), int(res.nit))
    if res.status == 2:
        return LPResult("infeasible", None, None, int(res.nit))
    if res.status == 3:
        return LPResult("unbounded", None, None, int(res.nit))
    raise LPError(f"HiGHS failed: {res.message}")


def _empty_rows_feasible(problem: MilpProblem) -> bool:
    r = problem.rhs
    s = problem.sense
    return bool(np.all(np.where(s == LE, r >= 0, np.where(s == GE, r <= 0, r == 0))))


def solve_lp(problem: MilpProblem, lb=None, ub=None, backend: str = "simplex") -> LPResult:
    """Solve the continuous relaxation of ``problem``.

    Integrality flags are ignored.  ``lb``/``ub`` override the stored bounds.
    The result objective is in the problem's (maximisation) sense.
    """
    lb = problem.lb if lb is None else np.asarray(lb, dtype=float)
    ub = problem.ub if ub is None else np.asarray(ub, dtype=float)
    if np.any(lb > ub + 1e-12):
        return LPResult("infeasible", None, None, 0)
    if backend == "simplex":
        return simplex_solve(problem, lb, ub)
    if backend == "highs":
        return _highs_solve(problem, lb, ub)
    raise ValueError(f"unknown LP backend {backend!r}; choose from {BACKENDS}")
