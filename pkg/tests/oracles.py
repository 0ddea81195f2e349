"""Independent reference computations used by the tests.

None of these import the model builders: they work from the instance and
tree data alone.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


def scenario_profit_C0(instance, tree) -> float:
    """Zero travel cost: sum over scenarios of everything that ever accumulates."""
    E = instance.capacity_kg
    total = 0.0
    for leaf in tree.leaves:
        path = tree.path(int(leaf))
        kg = instance.initial_kg.sum() + sum((tree.rates[n] * E).sum() for n in path[1:])
        total += tree.prob[leaf] * kg
    return instance.parameters.R * total


def count_oracle(variant: str, n_bins: int, parent: np.ndarray) -> dict[str, int]:
    """Variable and row counts by listing every index tuple of every family."""
    N = n_bins
    n_nodes = len(parent)
    stage = np.zeros(n_nodes, dtype=int)
    stage[0] = 1
    for n in range(1, n_nodes):
        stage[n] = stage[parent[n]] + 1
    T = int(stage.max())
    nonroot = [n for n in range(n_nodes) if parent[n] >= 0]
    bins = range(1, N + 1)
    if variant == "M":
        V = range(N + 1)
        x = [(t, i, j) for t in range(1, T) for i in V for j in V if i != j]
        f = [(n, i, j) for n in nonroot for i in V for j in V if i != j]
        rows_eq = ([("bal", n, i) for n in nonroot for i in bins]
                   + [("out", t, i) for t in range(1, T) for i in bins]
                   + [("in", t, i) for t in range(1, T) for i in bins]
                   + [("depot", t) for t in range(1, T)]
                   + [("init", i) for i in bins]
                   + [("inv", n, i) for n in nonroot for i in bins])
        rows_in = ([("cap", n, i, j) for n in nonroot for i in bins for j in bins if i != j]
                   + [("dep", n, i) for n in nonroot for i in bins]
                   + [("room", n, i, j) for n in nonroot for i in bins for j in bins if i != j]
                   + [("flo", n, i, j) for n in nonroot for i in bins for j in V if j != i]
                   + [(k, n, i) for k in ("coll", "empty", "ovf") for n in nonroot for i in bins])
    else:
        V = range(N + 2)
        cd = N + 1
        x = [(t, i, j) for t in range(1, T) for i in V for j in V if i != j]
        f = [(n, i, j) for n in nonroot for i in V for j in V
             if i != j and i != 0 and (i, j) != (cd, 0)]
        rows_eq = ([("bal", n, i) for n in nonroot for i in bins]
                   + [("cdin", n) for n in nonroot]
                   + [("pair", n, i, j) for n in nonroot for i in V for j in V if i != j]
                   + [("deg", t, j) for t in range(1, T) for j in bins]
                   + [("init", i) for i in bins]
                   + [("inv", n, i) for n in nonroot for i in bins])
        rows_in = ([("cap", n, i, j) for n in nonroot for i in bins for j in bins if i != j]
                   + [(k, n, i) for k in ("coll", "empty", "ovf") for n in nonroot for i in bins])
    y = [(t, i) for t in range(1, T) for i in bins]
    w = [(n, i) for n in nonroot for i in bins]
    u = [(n, i) for n in range(n_nodes) for i in bins]
    return {"binary_variables": len(x) + len(y), "continuous_variables": len(f) + len(w) + len(u),
            "equality_constraints": len(rows_eq), "inequality_constraints": len(rows_in)}


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def route_cost_oracle(d: np.ndarray):
    """Cheapest set of depot cycles covering a set of bin vertices (exhaustive)."""

    @lru_cache(maxsize=None)
    def cycle(group: tuple[int, ...]) -> float:
        best = np.inf
        for perm in itertools.permutations(group):
            tour = (0,) + perm + (0,)
            best = min(best, sum(d[a, b] for a, b in zip(tour, tour[1:])))
        return best

    @lru_cache(maxsize=None)
    def cover(visited: frozenset) -> float:
        if not visited:
            return 0.0
        return min(sum(cycle(tuple(sorted(g))) for g in part)
                   for part in _set_partitions(sorted(visited)))

    return cover


def schedule_oracle(instance, tree):
    """Optimal profit by enumerating every visit schedule.

    Routing is decided per stage (shared by all nodes of the stage), so a
    schedule fixes all inventories along the tree.  Valid when the vehicle
    can carry every bin at once.  Returns ``(profit, schedule)`` or
    ``(None, None)`` when no schedule avoids overflow.
    """
    p = instance.parameters
    N, T = instance.n_bins, tree.T
    E = instance.capacity_kg
    assert p.Q >= E.sum(), "oracle assumes a single trip can empty every bin"
    cover = route_cost_oracle(instance.distances.values)
    best, best_sched = None, None
    order = np.argsort(tree.stage, kind="stable")
    for bits in itertools.product((0, 1), repeat=N * (T - 1)):
        y = np.array(bits, dtype=float).reshape(T - 1, N)
        u = {0: instance.initial_kg.astype(float)}
        kg = 0.0
        ok = True
        for n in order[1:]:
            before = u[int(tree.parent[n])] + tree.rates[n] * E
            if np.any(before > E + 1e-9):
                ok = False
                break
            yt = y[tree.stage[n] - 2]
            u[int(n)] = before * (1 - yt)
            kg += tree.prob[n] * float((before * yt).sum())
        if not ok:
            continue
        travel = sum(cover(frozenset(int(i) + 1 for i in np.flatnonzero(y[t]))) for t in range(T - 1))
        profit = p.R * kg - p.C * travel
        if best is None or profit > best + 1e-12:
            best, best_sched = profit, y
    return best, best_sched


def accumulation_oracle(days, fills) -> dict[int, float]:
    """Day -> rate, walking day by day from each collection back to the previous one."""
    out = {days[0]: 0.0}
    for k in range(1, len(days)):
        t1, t2 = days[k - 1], days[k]
        for day in range(t1 + 1, t2 + 1):
            out[day] = fills[k] / (t2 - t1)
    return out
