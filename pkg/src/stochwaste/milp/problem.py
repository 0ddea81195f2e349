"""Mixed-integer linear program container, solution record and builder."""

from __future__ import annotations

import bisect
import enum
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "L", "E", "G"
_SENSES = (LE, EQ, GE)


class MilpError(ValueError):
    """Malformed problem or an operation the problem does not support."""


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    TIME_LIMIT = "TimeLimit"


@dataclass
class MilpProblem:
    """Maximize ``c @ x + objective_constant`` subject to row constraints and bounds.

    Rows are ``A[r] @ x (sense[r]) rhs[r]`` with ``sense`` one of ``"L"``
    (<=), ``"E"`` (=) or ``"G"`` (>=).  Infinite bounds are stored as
    ``±np.inf``.  ``labels`` maps model symbols to index arrays (``-1`` marks
    an index combination that has no variable); ``meta`` carries free-form
    builder information.
    """

    c: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    integer: np.ndarray
    names: Sequence[str]
    row_names: Sequence[str]
    labels: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict[str, Any] = field(default_factory=dict)
    objective_constant: float = 0.0
    name: str = "problem"

    def __post_init__(self) -> None:
        n = len(self.c)
        m = len(self.rhs)
        if self.A.shape != (m, n):
            raise MilpError(f"constraint matrix shape {self.A.shape} != ({m}, {n})")
        if not (len(self.lb) == len(self.ub) == len(self.integer) == len(self.names) == n):
            raise MilpError("variable arrays disagree in length")
        if len(self.sense) != m or len(self.row_names) != m:
            raise MilpError("row arrays disagree in length")
        if m and not np.isin(self.sense, _SENSES).all():
            raise MilpError("unknown constraint sense")
        if np.any(self.lb > self.ub):
            bad = int(np.flatnonzero(self.lb > self.ub)[0])
            raise MilpError(f"variable {self.names[bad]} has lb > ub")
        if np.isnan(self.lb).any() or np.isnan(self.ub).any():
            raise MilpError("NaN bound")

    # -- sizes -------------------------------------------------------------
    @property
    def num_vars(self) -> int:
        return len(self.c)

    @property
    def num_rows(self) -> int:
        return len(self.rhs)

    @property
    def binary_mask(self) -> np.ndarray:
        return self.integer & (self.lb >= 0) & (self.ub <= 1)

    @property
    def num_integer(self) -> int:
        return int(self.integer.sum())

    @property
    def num_binary(self) -> int:
        return int(self.binary_mask.sum())

    @property
    def num_continuous(self) -> int:
        return int((~self.integer).sum())

    @property
    def num_equality(self) -> int:
        return int((self.sense == EQ).sum())

    @property
    def num_inequality(self) -> int:
        return int((self.sense != EQ).sum())

    def size_report(self) -> dict[str, int]:
        return {
            "binary_variables": self.num_binary,
            "continuous_variables": self.num_continuous,
            "equality_constraints": self.num_equality,
            "inequality_constraints": self.num_inequality,
        }

    # -- evaluation --------------------------------------------------------
    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x) + self.objective_constant

    def max_violation(self, x: np.ndarray) -> float:
        """Largest absolute violation over rows and bounds."""
        x = np.asarray(x, dtype=float)
        viol = 0.0
        if self.num_rows:
            act = self.A @ x
            r = act - self.rhs
            v = np.where(self.sense == LE, np.maximum(r, 0.0),
                         np.where(self.sense == GE, np.maximum(-r, 0.0), np.abs(r)))
            viol = float(v.max())
        if self.num_vars:
            viol = max(viol, float(np.maximum(self.lb - x, 0).max()),
                       float(np.maximum(x - self.ub, 0).max()))
        return viol

    def max_integrality_violation(self, x: np.ndarray) -> float:
        xi = np.asarray(x)[self.integer]
        return float(np.abs(xi - np.round(xi)).max()) if xi.size else 0.0

    def is_feasible(self, x: np.ndarray, feas_tol: float = 1e-6, int_tol: float = 1e-6) -> bool:
        return self.max_violation(x) <= feas_tol and self.max_integrality_violation(x) <= int_tol

    # -- derived problems --------------------------------------------------
    def with_bounds(self, lb: np.ndarray | None = None, ub: np.ndarray | None = None) -> "MilpProblem":
        return replace(self,
                       lb=self.lb.copy() if lb is None else np.asarray(lb, dtype=float),
                       ub=self.ub.copy() if ub is None else np.asarray(ub, dtype=float))

    def relaxed(self) -> "MilpProblem":
        return replace(self, integer=np.zeros_like(self.integer))

    def index(self, name: str) -> int:
        lookup = self.meta.get("_name_index")
        if lookup is None:
            lookup = {nm: k for k, nm in enumerate(self.names)}
            self.meta["_name_index"] = lookup
        try:
            return lookup[name]
        except KeyError:
            raise MilpError(f"unknown variable {name!r}") from None

    def value_of(self, x: np.ndarray, label: str) -> np.ndarray:
        """Gather the values of a labelled block; absent entries read as 0."""
        idx = self.labels[label]
        out = np.zeros(idx.shape)
        ok = idx >= 0
        out[ok] = np.asarray(x)[idx[ok]]
        return out


@dataclass
class MilpSolution:
    status: Status
    objective: float | None = None
    x: np.ndarray | None = None
    bound: float | None = None
    gap: float | None = None
    nodes: int = 0
    lp_iterations: int = 0
    wall_time: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.x is not None and self.status in (Status.OPTIMAL, Status.FEASIBLE, Status.TIME_LIMIT)


def relative_gap(bound: float, incumbent: float) -> float:
    return abs(bound - incumbent) / max(1e-10, abs(incumbent))


class NameTable(Sequence):
    """Read-only sequence of names built from explicit lists and lazy generators.

    Large models have hundreds of thousands of variables and rows; their
    names are produced on demand by ``fn(local_index)`` instead of being
    materialised at build time.
    """

    def __init__(self) -> None:
        self._starts: list[int] = []
        self._parts: list[tuple[int, Any]] = []
        self._len = 0

    def extend(self, source, count: int | None = None) -> None:
        if callable(source):
            if count is None:
                raise MilpError("a lazy name block needs a count")
        else:
            source = list(source)
            count = len(source)
        if count == 0:
            return
        self._starts.append(self._len)
        self._parts.append((count, source))
        self._len += count

    def __len__(self) -> int:
        return self._len

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(self._len))]
        k = int(k)
        if k < 0:
            k += self._len
        if not 0 <= k < self._len:
            raise IndexError(k)
        b = bisect.bisect_right(self._starts, k) - 1
        _, src = self._parts[b]
        off = k - self._starts[b]
        return src(off) if callable(src) else src[off]

    def __iter__(self):
        for (count, src) in self._parts:
            if callable(src):
                for off in range(count):
                    yield src(off)
            else:
                yield from src


class ProblemBuilder:
    """Incremental, vectorised construction of a :class:`MilpProblem`.

    Variables are added in blocks (``add_vars``) and constraints in batches
    (``add_rows``), each batch being a rectangular array of column indices with
    matching coefficients.  Padding entries may use coefficient 0.
    """

    def __init__(self, name: str = "problem") -> None:
        self.name = name
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._int: list[np.ndarray] = []
        self._names = NameTable()
        self._nvar = 0
        self._rows_i: list[np.ndarray] = []
        self._rows_j: list[np.ndarray] = []
        self._rows_v: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []
        self._rhs: list[np.ndarray] = []
        self._row_names = NameTable()
        self._nrow = 0
        self._obj_j: list[np.ndarray] = []
        self._obj_v: list[np.ndarray] = []
        self.labels: dict[str, np.ndarray] = {}
        self.meta: dict[str, Any] = {}
        self.objective_constant = 0.0

    @property
    def num_vars(self) -> int:
        return self._nvar

    def add_vars(self, count: int, lb=0.0, ub=np.inf, integer=False, names=None) -> np.ndarray:
        count = int(count)
        idx = np.arange(self._nvar, self._nvar + count)
        self._lb.append(np.broadcast_to(np.asarray(lb, dtype=float), (count,)).copy())
        self._ub.append(np.broadcast_to(np.asarray(ub, dtype=float), (count,)).copy())
        self._int.append(np.full(count, bool(integer)))
        if names is None:
            start = self._nvar
            self._names.extend(lambda k: f"v{start + k}", count)
        elif callable(names):
            self._names.extend(names, count)
        else:
            if len(names) != count:
                raise MilpError("names length mismatch")
            self._names.extend(names)
        self._nvar += count
        return idx

    def add_var(self, name: str, lb=0.0, ub=np.inf, integer=False) -> int:
        return int(self.add_vars(1, lb, ub, integer, [name])[0])

    def add_binary(self, name: str) -> int:
        return self.add_var(name, 0.0, 1.0, True)

    def add_rows(self, cols, coefs, sense: str, rhs, names=None, prefix: str = "r") -> None:
        cols = np.atleast_2d(np.asarray(cols, dtype=np.int64))
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), cols.shape)
        k = cols.shape[0]
        if k == 0:
            return
        if sense not in _SENSES:
            raise MilpError(f"unknown sense {sense!r}")
        if cols.size and (cols.min() < 0 or cols.max() >= self._nvar):
            raise MilpError("constraint references an undeclared variable")
        rows = np.repeat(np.arange(self._nrow, self._nrow + k), cols.shape[1])
        self._rows_i.append(rows)
        self._rows_j.append(cols.ravel())
        self._rows_v.append(coefs.ravel())
        self._sense.append(np.full(k, sense))
        self._rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (k,)).copy())
        if names is None:
            start = self._nrow
            self._row_names.extend(lambda r: f"{prefix}{start + r}", k)
        elif callable(names):
            self._row_names.extend(names, k)
        else:
            if len(names) != k:
                raise MilpError("row names length mismatch")
            self._row_names.extend(names)
        self._nrow += k

    def add_constraint(self, terms, sense: str, rhs: float, name: str | None = None) -> None:
        """Add one row; ``terms`` is a mapping or a sequence of ``(var, coef)``."""
        items = list(terms.items()) if isinstance(terms, dict) else list(terms)
        if sense in ("<=", "<"):
            sense = LE
        elif sense in (">=", ">"):
            sense = GE
        elif sense in ("==", "="):
            sense = EQ
        cols = [int(j) for j, _ in items] or [0]
        vals = [float(v) for _, v in items] or [0.0]
        if not items and self._nvar == 0:
            # empty row on an empty problem: keep a consistent shape
            self._sense.append(np.array([sense]))
            self._rhs.append(np.array([float(rhs)]))
            self._row_names.extend([name or f"r{self._nrow}"])
            self._nrow += 1
            return
        self.add_rows([cols], [vals], sense, [rhs], names=None if name is None else [name])

    def add_objective(self, cols, coefs) -> None:
        cols = np.asarray(cols, dtype=np.int64).ravel()
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), np.asarray(cols).shape).ravel()
        self._obj_j.append(cols)
        self._obj_v.append(coefs)

    def set_objective(self, terms) -> None:
        items = list(terms.items()) if isinstance(terms, dict) else list(terms)
        self._obj_j, self._obj_v = [], []
        if items:
            self.add_objective([j for j, _ in items], [v for _, v in items])

    def build(self) -> MilpProblem:
        n, m = self._nvar, self._nrow
        cat = (lambda parts, dtype: np.concatenate(parts).astype(dtype) if parts
               else np.zeros(0, dtype=dtype))
        c = np.zeros(n)
        if self._obj_j:
            np.add.at(c, np.concatenate(self._obj_j), np.concatenate(self._obj_v))
        A = sp.coo_matrix((cat(self._rows_v, float), (cat(self._rows_i, np.int64), cat(self._rows_j, np.int64))),
                          shape=(m, n)).tocsr()
        A.sum_duplicates()
        A.eliminate_zeros()
        return MilpProblem(
            c=c, A=A, sense=cat(self._sense, "<U1"), rhs=cat(self._rhs, float),
            lb=cat(self._lb, float), ub=cat(self._ub, float), integer=cat(self._int, bool),
            names=self._names, row_names=self._row_names,
            labels=dict(self.labels), meta=dict(self.meta),
            objective_constant=self.objective_constant, name=self.name,
        )
