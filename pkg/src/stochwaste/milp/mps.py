"""Fixed-format MPS export, a matching reader, and solution-file import.

Fixed MPS limits names to 8 characters.  Names that do not fit, or that
collide after truncation, are replaced by deterministic codes and the
replacement is recorded in a sidecar mapping (``mps name -> model name``)
so that solutions read back from an external solver can be mapped onto
the in-memory problem.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .problem import EQ, GE, LE, MilpError, MilpProblem, MilpSolution, Status

OBJ_ROW = "PROFIT"
_B36 = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ"


class SolutionFileError(MilpError):
    pass


@dataclass
class MpsExport:
    text: str
    column_names: list[str]
    row_names: list[str]
    renamed: dict[str, str] = field(default_factory=dict)   # mps name -> original

    def write(self, path: str | Path) -> Path:
        """Write the MPS file and, when names were changed, ``<path>.names.json``."""
        path = Path(path)
        path.write_text(self.text, encoding="utf-8")
        if self.renamed:
            self.sidecar_path(path).write_text(json.dumps(self.renamed, indent=1, sort_keys=True),
                                               encoding="utf-8")
        return path

    @staticmethod
    def sidecar_path(path: str | Path) -> Path:
        path = Path(path)
        return path.with_name(path.name + ".names.json")


def _code(prefix: str, k: int) -> str:
    digits = ""
    while True:
        k, r = divmod(k, 36)
        digits = _B36[r] + digits
        if k == 0:
            break
    return prefix + digits.rjust(7, "0")


def _short_names(names: list[str], prefix: str, reserved: set[str]) -> tuple[list[str], dict[str, str]]:
    """Names that fit are kept; longer ones are truncated, and truncations that
    collide are replaced by ``<prefix><7 base-36 digits>`` codes."""
    used = set(reserved)
    out: list[str | None] = [None] * len(names)
    for k, nm in enumerate(names):
        if len(nm) <= 8 and " " not in nm and nm not in used:
            out[k] = nm
            used.add(nm)
    renamed: dict[str, str] = {}
    counter = 0
    for k, nm in enumerate(names):
        if out[k] is not None:
            continue
        cand = nm.replace(" ", "_")[:8]
        if cand in used:
            while True:
                cand = _code(prefix, counter)
                counter += 1
                if cand not in used:
                    break
        used.add(cand)
        renamed[cand] = nm
        out[k] = cand
    return out, renamed


def _num(v: float) -> str:
    """Format ``v`` in at most 12 characters, keeping as many digits as fit."""
    if v == int(v) and abs(v) < 1e11:
        s = str(int(v))
        if len(s) <= 12:
            return s
    for p in range(12, 0, -1):
        s = f"{v:.{p}g}"
        if len(s) <= 12:
            return s
    raise MilpError(f"cannot format {v!r} in 12 characters")


def _line(f1: str, name: str, n2: str, v2: str, n3: str = "", v3: str = "") -> str:
    line = f" {f1:<2} {name:<8}  {n2:<8}  {v2:>12}"
    if n3:
        line += f"   {n3:<8}  {v3:>12}"
    return line.rstrip()


def export_mps(problem: MilpProblem) -> MpsExport:
    """Fixed-format MPS with an ``OBJSENSE MAX`` section and ``BOUNDS``."""
    cols, ren_c = _short_names(problem.names, "C", {OBJ_ROW})
    rows, ren_r = _short_names(problem.row_names, "R", {OBJ_ROW} | set(cols))
    renamed = {**ren_c, **ren_r}
    out = [f"NAME          {problem.name[:8]}", "OBJSENSE", "    MAX", "ROWS", f" N  {OBJ_ROW}"]
    sense_code = {LE: "L", EQ: "E", GE: "G"}
    for r, nm in enumerate(rows):
        out.append(f" {sense_code[problem.sense[r]]}  {nm}")
    out.append("COLUMNS")
    A = sp.csc_matrix(problem.A)
    in_int = False
    for j, cname in enumerate(cols):
        if problem.integer[j] and not in_int:
            out.append("    MARKER                 'MARKER'                 'INTORG'")
            in_int = True
        elif not problem.integer[j] and in_int:
            out.append("    MARKER                 'MARKER'                 'INTEND'")
            in_int = False
        entries = []
        if problem.c[j] != 0:
            entries.append((OBJ_ROW, problem.c[j]))
        start, end = A.indptr[j], A.indptr[j + 1]
        entries.extend((rows[r], v) for r, v in zip(A.indices[start:end], A.data[start:end]))
        if not entries:
            entries.append((OBJ_ROW, 0.0))
        for k in range(0, len(entries), 2):
            pair = entries[k:k + 2]
            if len(pair) == 2:
                out.append(_line("", cname, pair[0][0], _num(pair[0][1]), pair[1][0], _num(pair[1][1])))
            else:
                out.append(_line("", cname, pair[0][0], _num(pair[0][1])))
    if in_int:
        out.append("    MARKER                 'MARKER'                 'INTEND'")
    out.append("RHS")
    for k, (nm, v) in enumerate(zip(rows, problem.rhs)):
        if v != 0:
            out.append(_line("", "RHS", nm, _num(v)))
    if problem.objective_constant:
        # MPS convention: the objective RHS is the negated constant
        out.append(_line("", "RHS", OBJ_ROW, _num(-problem.objective_constant)))
    out.append("BOUNDS")
    for j, cname in enumerate(cols):
        lo, hi = problem.lb[j], problem.ub[j]
        if problem.integer[j] and lo == 0 and hi == 1:
            out.append(_line("BV", "BND", cname, ""))
            continue
        if lo == hi:
            out.append(_line("FX", "BND", cname, _num(lo)))
            continue
        if np.isneginf(lo) and np.isposinf(hi):
            out.append(_line("FR", "BND", cname, ""))
            continue
        if np.isneginf(lo):
            out.append(_line("MI", "BND", cname, ""))
        elif lo != 0:
            out.append(_line("LO", "BND", cname, _num(lo)))
        if np.isfinite(hi):
            out.append(_line("UP", "BND", cname, _num(hi)))
        elif problem.integer[j]:
            out.append(_line("PL", "BND", cname, ""))
    out.append("ENDATA")
    return MpsExport("\n".join(out) + "\n", cols, rows, renamed)


def read_mps(text: str) -> MilpProblem:
    """Parse MPS text (fixed or free spacing) back into a :class:`MilpProblem`."""
    section = None
    maximize = False
    obj_row = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    col_order: list[str] = []
    col_int: dict[str, bool] = {}
    entries: list[tuple[str, str, float]] = []
    rhs: dict[str, float] = {}
    ranges: dict[str, float] = {}
    bounds: list[tuple[str, str, float | None]] = []
    in_int = False
    name = "problem"
    for raw in text.splitlines():
        if not raw.strip() or raw.startswith("*"):
            continue
        if not raw[0].isspace():
            head = raw.split()
            section = head[0]
            if section == "NAME" and len(head) > 1:
                name = head[1]
            if section == "OBJSENSE" and len(head) > 1:
                maximize = head[1].upper() in ("MAX", "MAXIMIZE")
            continue
        tok = raw.split()
        if section == "OBJSENSE":
            maximize = tok[0].upper() in ("MAX", "MAXIMIZE")
        elif section == "ROWS":
            s, r = tok[0], tok[1]
            if s == "N":
                obj_row = obj_row or r
            else:
                row_sense[r] = s
                row_order.append(r)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1] == "'MARKER'":
                in_int = tok[2] == "'INTORG'"
                continue
            c = tok[0]
            if c not in col_int:
                col_order.append(c)
                col_int[c] = in_int
            for k in range(1, len(tok) - 1, 2):
                entries.append((c, tok[k], float(tok[k + 1])))
        elif section in ("RHS", "RANGES"):
            target = rhs if section == "RHS" else ranges
            for k in range(1, len(tok) - 1, 2):
                target[tok[k]] = float(tok[k + 1])
        elif section == "BOUNDS":
            kind = tok[0]
            if kind in ("FR", "MI", "PL", "BV"):
                bounds.append((kind, tok[2], None))
            else:
                bounds.append((kind, tok[2], float(tok[3])))
    if ranges:
        raise MilpError("ranged rows are not supported by MilpProblem")
    cidx = {c: k for k, c in enumerate(col_order)}
    ridx = {r: k for k, r in enumerate(row_order)}
    n, m = len(col_order), len(row_order)
    c = np.zeros(n)
    I, J, V = [], [], []
    for col, row, v in entries:
        if row == obj_row:
            c[cidx[col]] += v
        else:
            I.append(ridx[row])
            J.append(cidx[col])
            V.append(v)
    if not maximize:
        c = -c
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    integer = np.array([col_int[col] for col in col_order], dtype=bool)
    ub[integer] = np.inf
    for kind, col, v in bounds:
        j = cidx[col]
        if kind == "UP":
            ub[j] = v
            if v < 0 and lb[j] == 0:
                lb[j] = -np.inf
        elif kind == "LO":
            lb[j] = v
        elif kind == "FX":
            lb[j] = ub[j] = v
        elif kind == "FR":
            lb[j], ub[j] = -np.inf, np.inf
        elif kind == "MI":
            lb[j] = -np.inf
        elif kind == "PL":
            ub[j] = np.inf
        elif kind == "BV":
            lb[j], ub[j] = 0.0, 1.0
            integer[j] = True
    const = -rhs.pop(obj_row, 0.0) if obj_row else 0.0
    A = sp.coo_matrix((V, (I, J)), shape=(m, n)).tocsr()
    return MilpProblem(
        c=c, A=A, sense=np.array([row_sense[r] for r in row_order], dtype="<U1"),
        rhs=np.array([rhs.get(r, 0.0) for r in row_order]), lb=lb, ub=ub, integer=integer,
        names=col_order, row_names=row_order, objective_constant=const if maximize else -const,
        name=name,
    )


def import_solution(source, problem: MilpProblem, renamed: dict[str, str] | None = None,
                    feas_tol: float = 1e-6, int_tol: float = 1e-6) -> MilpSolution:
    """Read ``<name> <value>`` lines and validate them against ``problem``.

    ``source`` is a path or the file text.  Lines that do not parse as a name
    followed by a number (headers, comments) are skipped; unknown names raise.
    Variables missing from the file are taken as zero.  ``renamed`` is the MPS
    sidecar mapping; if omitted and ``source`` is a path, a sidecar next to
    the corresponding ``.mps`` is not guessed -- pass it explicitly.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    renamed = renamed or {}
    x = np.zeros(problem.num_vars)
    seen = False
    for raw in text.splitlines():
        tok = raw.replace("=", " ").split()
        if len(tok) < 2 or tok[0].startswith(("#", "*")):
            continue
        try:
            val = float(tok[1])
        except ValueError:
            continue
        nm = renamed.get(tok[0], tok[0])
        try:
            j = problem.index(nm)
        except MilpError:
            raise SolutionFileError(f"solution names unknown variable {tok[0]!r}") from None
        x[j] = val
        seen = True
    if not seen:
        raise SolutionFileError("solution file contains no assignments")
    viol = problem.max_violation(x)
    ivio = problem.max_integrality_violation(x)
    if viol > feas_tol or ivio > int_tol:
        raise SolutionFileError(f"imported solution violates the problem (rows/bounds {viol:.3g}, "
                                f"integrality {ivio:.3g})")
    obj = problem.objective(x)
    return MilpSolution(Status.FEASIBLE, obj, x)
