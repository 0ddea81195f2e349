"""Dense bounded-variable primal simplex.

Two-phase method on ``A x + s = b`` where every row receives a slack whose
bounds encode the row sense.  Nonbasic variables sit at a finite bound (or
at zero when free).  Rows whose slack cannot absorb the initial residual get
an artificial column; phase one drives the artificials to zero.

Pricing is Dantzig's rule; after a run of degenerate pivots the method
switches to Bland's rule until the objective moves again, which rules out
cycling.  The basis is refactorised at every iteration, which is affordable
for the micro problems this routine is meant for.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .problem import EQ, GE, LE, MilpProblem


class LPError(RuntimeError):
    """The simplex stalled or hit its iteration cap."""


@dataclass
class LPResult:
    status: str                 # "optimal" | "infeasible" | "unbounded"
    x: np.ndarray | None
    objective: float | None     # in the maximisation sense of the problem
    iterations: int


_AT_LOWER, _AT_UPPER, _FREE, _BASIC = 0, 1, 2, 3

PIVOT_TOL = 1e-9
OPT_TOL = 1e-9
DEGENERATE_RUN = 30


def _initial_value(lo: float, hi: float) -> tuple[float, int]:
    if np.isfinite(lo):
        return lo, _AT_LOWER
    if np.isfinite(hi):
        return hi, _AT_UPPER
    return 0.0, _FREE


class _Simplex:
    def __init__(self, A, b, lo, hi, max_iter):
        self.A = A
        self.b = b
        self.lo = lo
        self.hi = hi
        self.m, self.n = A.shape
        self.max_iter = max_iter
        self.iterations = 0

    def setup(self, n_struct):
        m = self.m
        x = np.zeros(self.n)
        state = np.zeros(self.n, dtype=np.int8)
        for j in range(self.n):
            x[j], state[j] = _initial_value(self.lo[j], self.hi[j])
        slack0 = n_struct
        # residual with all slacks at zero
        x[slack0:slack0 + m] = 0.0
        r = self.b - self.A[:, :n_struct] @ x[:n_struct]
        basis = np.empty(m, dtype=np.int64)
        art_cols, art_rows, art_sign = [], [], []
        for i in range(m):
            s = slack0 + i
            if self.lo[s] - 1e-12 <= r[i] <= self.hi[s] + 1e-12:
                basis[i] = s
                x[s] = r[i]
                state[s] = _BASIC
            else:
                art_rows.append(i)
                art_sign.append(1.0 if r[i] >= 0 else -1.0)
                # slack stays nonbasic at the bound closest to zero
                x[s], state[s] = (0.0, _AT_LOWER) if self.lo[s] == 0.0 else (0.0, _AT_UPPER)
        k = len(art_rows)
        if k:
            extra = np.zeros((m, k))
            extra[art_rows, np.arange(k)] = art_sign
            self.A = np.hstack([self.A, extra])
            self.lo = np.concatenate([self.lo, np.zeros(k)])
            self.hi = np.concatenate([self.hi, np.full(k, np.inf)])
            x = np.concatenate([x, np.abs(r[art_rows])])
            state = np.concatenate([state, np.full(k, _BASIC, dtype=np.int8)])
            art_cols = list(range(self.n, self.n + k))
            basis[art_rows] = art_cols
            self.n += k
        self.x, self.state, self.basis = x, state, basis
        return np.array(art_cols, dtype=np.int64)

    def _basic_values(self, lu):
        nonbasic = self.state != _BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        return la.lu_solve(lu, rhs)

    def run(self, cost):
        """Minimise ``cost @ x`` from the current basis; returns a status."""
        degenerate = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                raise LPError(f"simplex iteration cap ({self.max_iter}) reached")
            B = self.A[:, self.basis]
            try:
                lu = la.lu_factor(B, check_finite=False)
            except (ValueError, la.LinAlgError) as exc:  # pragma: no cover
                raise LPError("singular basis") from exc
            self.x[self.basis] = self._basic_values(lu)
            y = la.lu_solve(lu, cost[self.basis], trans=1)
            d = cost - self.A.T @ y
            st = self.state
            score = np.where(st == _AT_LOWER, -d,
                             np.where(st == _AT_UPPER, d,
                                      np.where(st == _FREE, np.abs(d), -np.inf)))
            # fixed variables can never move
            score[(self.hi - self.lo <= 0) & (st != _BASIC)] = -np.inf
            eligible = np.flatnonzero(score > OPT_TOL)
            if eligible.size == 0:
                return "optimal"
            j = int(eligible[0]) if bland else int(eligible[np.argmax(score[eligible])])
            direction = 1.0 if (st[j] == _AT_LOWER or (st[j] == _FREE and d[j] < 0)) else -1.0
            alpha = la.lu_solve(lu, self.A[:, j]) * direction
            xb = self.x[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = alpha > PIVOT_TOL
                inc = alpha < -PIVOT_TOL
                ratios = np.full(self.m, np.inf)
                ratios[dec] = (xb[dec] - lob[dec]) / alpha[dec]
                ratios[inc] = (hib[inc] - xb[inc]) / (-alpha[inc])
            ratios = np.maximum(ratios, 0.0)
            flip = self.hi[j] - self.lo[j]
            theta = float(ratios.min()) if self.m else np.inf
            self.iterations += 1
            if flip <= theta:
                if not np.isfinite(flip):
                    return "unbounded"
                self.x[j] = self.hi[j] if direction > 0 else self.lo[j]
                st[j] = _AT_UPPER if direction > 0 else _AT_LOWER
                theta = flip
            else:
                if not np.isfinite(theta):
                    return "unbounded"
                ties = np.flatnonzero(ratios <= theta + 1e-12)
                if bland:
                    r = int(ties[np.argmin(self.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(alpha[ties]))])
                leaving = int(self.basis[r])
                self.x[j] += direction * theta
                if alpha[r] > 0:
                    self.x[leaving], st[leaving] = self.lo[leaving], _AT_LOWER
                else:
                    self.x[leaving], st[leaving] = self.hi[leaving], _AT_UPPER
                st[j] = _BASIC
                self.basis[r] = j
            if theta <= 1e-12:
                degenerate += 1
                if degenerate >= DEGENERATE_RUN:
                    bland = True
            else:
                degenerate = 0
                bland = False


def simplex_solve(problem: MilpProblem, lb=None, ub=None, max_iter: int | None = None) -> LPResult:
    """Solve the LP relaxation of ``problem`` (bounds overridable)."""
    lo = np.asarray(problem.lb if lb is None else lb, dtype=float)
    hi = np.asarray(problem.ub if ub is None else ub, dtype=float)
    n, m = problem.num_vars, problem.num_rows
    if np.any(lo > hi + 1e-12):
        return LPResult("infeasible", None, None, 0)
    A = problem.A.toarray() if m else np.zeros((0, n))
    slack_lo = np.where(problem.sense == GE, -np.inf, 0.0)
    slack_hi = np.where(problem.sense == LE, np.inf, 0.0)
    full = np.hstack([A, np.eye(m)])
    solver = _Simplex(full, problem.rhs.astype(float),
                      np.concatenate([lo, slack_lo]), np.concatenate([hi, slack_hi]),
                      max_iter or 50 * (n + 2 * m) + 1000)
    if m == 0:
        # bounds only: each variable independently at its best bound
        x = np.zeros(n)
        for j in range(n):
            cj = problem.c[j]
            if cj > 0:
                x[j] = hi[j]
            elif cj < 0:
                x[j] = lo[j]
            else:
                x[j] = _initial_value(lo[j], hi[j])[0]
        if not np.all(np.isfinite(x)):
            return LPResult("unbounded", None, None, 0)
        return LPResult("optimal", x, problem.objective(x), 0)
    arts = solver.setup(n)
    if arts.size:
        cost1 = np.zeros(solver.n)
        cost1[arts] = 1.0
        status = solver.run(cost1)
        infeas = float(solver.x[arts].sum())
        scale = 1.0 + float(np.abs(problem.rhs).max(initial=0.0))
        if status != "optimal" or infeas > 1e-9 * scale:
            return LPResult("infeasible", None, None, solver.iterations)
        solver.hi[arts] = 0.0
        solver.x[arts] = np.clip(solver.x[arts], 0.0, 0.0)
        for a in arts:
            if solver.state[a] != _BASIC:
                solver.state[a] = _AT_LOWER
    cost2 = np.zeros(solver.n)
    cost2[:n] = -problem.c
    status = solver.run(cost2)
    if status == "unbounded":
        return LPResult("unbounded", None, None, solver.iterations)
    x = solver.x[:n].copy()
    # basic values may sit a hair outside their bounds
    x = np.clip(x, lo, hi)
    return LPResult("optimal", x, problem.objective(x), solver.iterations)
