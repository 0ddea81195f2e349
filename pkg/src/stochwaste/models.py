"""Stochastic inventory-routing models over a scenario tree.

Two formulations are built as :class:`MilpProblem`:

``M``
    directed single-commodity flow model.  Vertices ``0..N`` (0 = depot).
    Routing ``x[t, i, j]`` and visits ``y[t, i]`` are decided at stage ``t``
    for day ``t + 1``; flows ``f``, collections ``w`` and inventories ``u``
    live on tree nodes.
``Msym``
    two-commodity flow model for symmetric distances with a copy depot
    ``N + 1``; every route is a path from ``0`` to ``N + 1`` whose load and
    empty space add up to ``Q`` on each traversed edge.

Both builders accept a stage window ``first_stage..last_stage``: the model
then covers the forest of subtrees hanging from every node of
``first_stage``, with the root inventories given explicitly.  The full model
is the window ``1..T`` with inventories from the initial fill levels.

Quantities are in kg; bin vertex ``i`` (1-based) is the ``i``-th bin of the
instance.  Variable names are ``x_t_i_j``, ``y_t_i``, ``f_n_i_j``, ``w_n_i``
and ``u_n_i`` where ``n`` is the tree node id and ``i``, ``j`` are vertices.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instance import Bin, DistanceMatrix, Instance, Parameters
from .milp import EQ, GE, LE, MilpProblem, MilpSolution, ProblemBuilder
from .scentree import ScenarioTree

log = logging.getLogger(__name__)

VARIANTS = ("M", "Msym")


class ModelError(ValueError):
    pass


class DecodeError(ModelError):
    pass


# -- layout -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Layout:
    """Tree nodes covered by a model window and their positions."""

    nodes: np.ndarray          # tree node id per position, stage-ordered
    first_stage: int
    last_stage: int
    position: np.ndarray       # tree node id -> position, -1 if absent

    @classmethod
    def of(cls, tree: ScenarioTree, first_stage: int = 1, last_stage: int | None = None,
           prune_zero_prob: bool = False) -> "Layout":
        last = tree.T if last_stage is None else int(last_stage)
        if not 1 <= first_stage < last <= tree.T:
            raise ModelError(f"stage window {first_stage}..{last} invalid for a {tree.T}-stage tree")
        keep = (tree.stage >= first_stage) & (tree.stage <= last)
        if prune_zero_prob:
            keep &= tree.prob > 0
        nodes = np.flatnonzero(keep)
        pos = np.full(tree.n_nodes, -1, dtype=np.int64)
        pos[nodes] = np.arange(nodes.size)
        return cls(nodes, int(first_stage), last, pos)

    @property
    def n_x_stages(self) -> int:
        return self.last_stage - self.first_stage


def _namer(fmt: str, *arrays):
    arrays = [np.asarray(a).ravel() for a in arrays]
    return lambda k: fmt.format(*(a[k] for a in arrays))


def _pad(cols: np.ndarray, coefs: np.ndarray, filler: int):
    """Replace absent variables (-1) by ``filler`` with coefficient 0."""
    absent = cols < 0
    if absent.any():
        cols = np.where(absent, filler, cols)
        coefs = np.where(absent, 0.0, coefs)
    return cols, coefs


def extended_distances(d: np.ndarray) -> np.ndarray:
    """Distances over ``0..N+1`` with the copy depot duplicating the depot."""
    n1 = d.shape[0]
    out = np.zeros((n1 + 1, n1 + 1))
    out[:n1, :n1] = d
    out[n1, :n1] = d[0]
    out[:n1, n1] = d[:, 0]
    out[0, n1] = out[n1, 0] = 0.0
    return out


# -- builders ---------------------------------------------------------------------

def build_model(instance: Instance, tree: ScenarioTree, variant: str = "M", *,
                first_stage: int = 1, last_stage: int | None = None,
                root_inventory=None, tighten_big_m: bool = False,
                prune_zero_prob: bool = False, name: str | None = None) -> MilpProblem:
    """Build model ``M`` or ``Msym`` over a stage window of ``tree``.

    ``root_inventory`` gives the kg in every bin at each node of
    ``first_stage`` (shape ``(roots, N)``); it defaults to the initial fill
    levels and is required when ``first_stage > 1``.
    """
    if variant not in VARIANTS:
        raise ModelError(f"variant must be one of {VARIANTS}")
    N = instance.n_bins
    if tree.n_bins != N:
        raise ModelError(f"tree has {tree.n_bins} bins, instance has {N}")
    if last_stage is None and tree.T != instance.T:
        raise ModelError(f"tree has {tree.T} stages, instance horizon is {instance.T}")
    p = instance.parameters
    d = instance.distances.values
    if variant == "Msym" and not instance.distances.is_symmetric:
        raise ModelError("Msym needs a symmetric distance matrix; symmetrize the distances first")
    lay = Layout.of(tree, first_stage, last_stage, prune_zero_prob)
    k0 = lay.first_stage
    nT = lay.n_x_stages
    sym = variant == "Msym"
    V = N + 2 if sym else N + 1
    cd = N + 1
    dist = extended_distances(d) if sym else d
    EB = instance.capacity_kg
    Q, C, R = p.Q, p.C, p.R

    stages = tree.stage[lay.nodes]
    roots = np.flatnonzero(stages == k0)
    nonroot = np.flatnonzero(stages > k0)
    nL, m = lay.nodes.size, nonroot.size
    node_ids = lay.nodes
    tx = stages[nonroot] - 1 - k0                  # x-stage index of each non-root
    parent_pos = lay.position[tree.parent[node_ids[nonroot]]]
    if np.any(parent_pos < 0):
        raise ModelError("a modelled node has its parent outside the model")
    EBa = EB * tree.rates[node_ids[nonroot]]       # (m, N) kg
    prob = tree.prob[node_ids]

    if root_inventory is None:
        if k0 != 1:
            raise ModelError("root_inventory is required when the window starts after stage 1")
        root_inventory = np.broadcast_to(instance.initial_kg, (roots.size, N))
    root_inventory = np.asarray(root_inventory, dtype=float)
    if root_inventory.shape == (N,):
        root_inventory = np.broadcast_to(root_inventory, (roots.size, N))
    if root_inventory.shape != (roots.size, N):
        raise ModelError(f"root_inventory must have shape ({roots.size}, {N})")

    big_m = np.full(N, p.big_m)
    big_m_flow = big_m.copy()
    if tighten_big_m:
        big_m = np.minimum(big_m, EB)
        big_m_flow = np.minimum(big_m_flow, np.minimum(EB, Q))

    b = ProblemBuilder(name or f"{variant}_{N}")
    bins = np.arange(1, N + 1)
    allv = np.arange(V)

    # x: ordered pairs of distinct vertices
    off = ~np.eye(V, dtype=bool)
    ti, xi, xj = np.nonzero(np.broadcast_to(off, (nT, V, V)))
    x_idx = np.full((nT, V, V), -1, dtype=np.int64)
    x_idx[ti, xi, xj] = b.add_vars(ti.size, 0.0, 1.0, True,
                                   names=_namer("x_{}_{}_{}", ti + k0, xi, xj))
    ty, yi = np.nonzero(np.ones((nT, N), dtype=bool))
    y_idx = b.add_vars(ty.size, 0.0, 1.0, True, names=_namer("y_{}_{}", ty + k0, yi + 1)).reshape(nT, N)

    # f on non-root nodes
    if sym:
        fmask = off.copy()
        fmask[0, :] = False
        fmask[cd, 0] = False
    else:
        fmask = off
    fi, fj = np.nonzero(fmask)
    f_idx = np.full((nL, V, V), -1, dtype=np.int64)
    nf = fi.size
    fub = np.full(nf, np.inf)
    if not sym:
        fub[fi == 0] = 0.0       # no load leaves the depot
    fv = b.add_vars(m * nf, 0.0, np.tile(fub, m),
                    names=_namer("f_{}_{}_{}", np.repeat(node_ids[nonroot], nf),
                                 np.tile(fi, m), np.tile(fj, m)))
    f_idx[nonroot[:, None], fi[None, :], fj[None, :]] = fv.reshape(m, nf)
    w_idx = np.full((nL, N), -1, dtype=np.int64)
    w_idx[nonroot] = b.add_vars(m * N, names=_namer("w_{}_{}", np.repeat(node_ids[nonroot], N),
                                                    np.tile(bins, m))).reshape(m, N)
    u_idx = b.add_vars(nL * N, names=_namer("u_{}_{}", np.repeat(node_ids, N),
                                            np.tile(bins, nL))).reshape(nL, N)
    filler = int(u_idx[0, 0])

    F = f_idx[nonroot]            # (m, V, V)
    W = w_idx[nonroot]            # (m, N)
    X = x_idx[tx]                 # (m, V, V)
    Y = y_idx[tx]                 # (m, N)
    nid = node_ids[nonroot]

    def rows(cols, coefs, sense, rhs, fmt, *name_arrays):
        """Add one row per leading index of ``cols``; the last axis holds the terms."""
        cols = np.asarray(cols)
        lead, k = cols.shape[:-1], cols.shape[-1]
        coefs = np.broadcast_to(np.asarray(coefs, dtype=float), cols.shape).reshape(-1, k)
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), lead).ravel()
        names = [np.broadcast_to(a, lead) for a in name_arrays]
        c2, v2 = _pad(cols.reshape(-1, k), coefs, filler)
        b.add_rows(c2, v2, sense, rhs, names=_namer(fmt, *names))

    mm, ii = np.meshgrid(np.arange(m), bins, indexing="ij")     # (m, N)
    NN = nid[mm]
    out_js = np.array([allv[allv != i] for i in bins])           # (N, V-1)
    BI, BJ = np.nonzero(~np.eye(N, dtype=bool))
    BI, BJ = BI + 1, BJ + 1                                     # bin pairs
    PM, PP = np.meshgrid(np.arange(m), np.arange(BI.size), indexing="ij")

    # flow balance at each bin
    if sym:
        in_js = out_js
        cols = np.concatenate([F[:, bins[:, None], out_js], F[:, in_js, bins[:, None]], W[:, :, None]], axis=2)
        coef = np.concatenate([np.ones(V - 1), -np.ones(V - 1), [-2.0]])
    else:
        in_js = np.array([bins[bins != i] for i in bins]).reshape(N, N - 1)
        cols = np.concatenate([F[:, bins[:, None], out_js], F[:, in_js, bins[:, None]], W[:, :, None]], axis=2)
        coef = np.concatenate([np.ones(V - 1), -np.ones(N - 1), [-1.0]])
    rows(cols, coef, EQ, 0.0, "bal_{}_{}", NN, ii)

    if sym:
        # copy-depot inflow equals total collection
        cols = np.concatenate([F[:, bins, cd], W], axis=1)
        coef = np.concatenate([np.ones(N), -np.ones(N)])
        rows(cols, coef, EQ, 0.0, "cdin_{}", nid)
        # load plus empty space equals Q on traversed edges
        pi_, pj_ = np.nonzero(off)
        cols = np.stack([F[:, pi_, pj_], F[:, pj_, pi_], X[:, pi_, pj_]], axis=2)
        coef = np.array([1.0, 1.0, -Q])
        rows(cols, coef, EQ, 0.0, "pair_{}_{}_{}", nid[:, None], pi_[None, :], pj_[None, :])

    # flow capped by remaining capacity after the head's accumulation
    cols = np.stack([F[:, BI, BJ], X[:, BI, BJ]], axis=2)
    coef = np.stack([np.ones((m, BI.size)), -(Q - EBa[:, BJ - 1])], axis=2)
    rows(cols, coef, LE, 0.0, "cap_{}_{}_{}", nid[PM], BI[PP], BJ[PP])

    if not sym:
        # arcs into the depot
        cols = np.stack([F[:, bins, 0], X[:, bins, 0]], axis=2)
        rows(cols, np.array([1.0, -Q]), LE, 0.0, "dep_{}_{}", NN, ii)
        # flow plus collection at the head within Q
        cols = np.stack([F[:, BI, BJ], W[:, BJ - 1]], axis=2)
        rows(cols, np.array([1.0, 1.0]), LE, Q, "room_{}_{}_{}", nid[PM], BI[PP], BJ[PP])
        # a traversed arc carries at least the tail's collection
        Ji = out_js.ravel()
        Ii = np.repeat(bins, V - 1)
        cols = np.stack([F[:, Ii, Ji], W[:, Ii - 1], X[:, Ii, Ji]], axis=2)
        M_row = big_m_flow[Ii - 1]
        coef = np.stack([np.ones((m, Ii.size)), -np.ones((m, Ii.size)), -np.broadcast_to(M_row, (m, Ii.size))],
                        axis=2)
        QM, QP = np.meshgrid(np.arange(m), np.arange(Ii.size), indexing="ij")
        rows(cols, coef, GE, -M_row, "flo_{}_{}_{}", nid[QM], Ii[QP], Ji[QP])

    # degree constraints
    tt, jj = np.meshgrid(np.arange(nT), bins, indexing="ij")
    if sym:
        in_is = out_js
        cols = np.concatenate([x_idx[:, in_is, bins[:, None]], y_idx[:, :, None]], axis=2)
        coef = np.concatenate([np.ones(V - 1), [-2.0]])
        rows(cols, coef, EQ, 0.0, "deg_{}_{}", tt + k0, jj)
    else:
        cols = np.concatenate([x_idx[:, bins[:, None], out_js], y_idx[:, :, None]], axis=2)
        coef = np.concatenate([np.ones(V - 1), [-1.0]])
        rows(cols, coef, EQ, 0.0, "out_{}_{}", tt + k0, jj)
        cols = np.concatenate([x_idx[:, out_js, bins[:, None]], y_idx[:, :, None]], axis=2)
        rows(cols, coef, EQ, 0.0, "in_{}_{}", tt + k0, jj)
        cols = np.concatenate([x_idx[:, bins, 0], x_idx[:, 0, bins]], axis=1)
        coef = np.concatenate([np.ones(N), -np.ones(N)])
        rows(cols, coef, EQ, 0.0, "depot_{}", np.arange(nT) + k0)

    # collection only at visited bins, visited bins are emptied
    rows(np.stack([W, Y], axis=2), np.stack([np.ones((m, N)), -np.broadcast_to(EB, (m, N))], axis=2),
         LE, 0.0, "coll_{}_{}", NN, ii)
    rows(np.stack([u_idx[nonroot], Y], axis=2),
         np.stack([np.ones((m, N)), np.broadcast_to(big_m, (m, N))], axis=2),
         LE, big_m, "empty_{}_{}", NN, ii)
    # root inventories
    rr, ri = np.meshgrid(roots, bins, indexing="ij")
    rows(u_idx[roots][:, :, None], 1.0, EQ, root_inventory, "init_{}_{}", node_ids[rr], ri)
    # inventory recursion
    cols = np.stack([u_idx[nonroot], u_idx[parent_pos], W], axis=2)
    rows(cols, np.array([1.0, -1.0, 1.0]), EQ, EBa, "inv_{}_{}", NN, ii)
    # no overflow before collection
    rows(u_idx[parent_pos][:, :, None], 1.0, LE, EB - EBa, "ovf_{}_{}", NN, ii)

    # objective
    b.add_objective(W.ravel(), (R * prob[nonroot][:, None] * np.ones(N)).ravel())
    xk = x_idx[ti, xi, xj]
    scale = 0.5 if sym else 1.0
    b.add_objective(xk, -C * scale * dist[xi, xj])

    b.labels.update(x=x_idx, y=y_idx, f=f_idx, w=w_idx, u=u_idx)
    b.meta.update(variant=variant, n_bins=N, vertices=V, first_stage=k0, last_stage=lay.last_stage,
                  nodes=node_ids, position=lay.position, bin_ids=instance.bin_ids,
                  distances=dist, big_m_tightened=tighten_big_m)
    return b.build()


def build_model_M(instance: Instance, tree: ScenarioTree, **kw) -> MilpProblem:
    return build_model(instance, tree, "M", **kw)


def build_model_Msym(instance: Instance, tree: ScenarioTree, **kw) -> MilpProblem:
    return build_model(instance, tree, "Msym", **kw)


def expected_counts(variant: str, n_bins: int, tree_nodes: int, horizon: int) -> dict[str, int]:
    """Variable and row counts of the full model implied by the index sets."""
    N, T, n = n_bins, horizon, tree_nodes
    nr = n - 1
    if variant == "M":
        binary = (T - 1) * (N * (N + 1) + N)
        continuous = nr * ((N + 1) * N + N) + n * N
        eq = nr * 2 * N + (T - 1) * (2 * N + 1) + N
        ineq = nr * (N * (N - 1) * 2 + N + N * N + 3 * N)
    else:
        V = N + 2
        binary = (T - 1) * (V * (V - 1) + N)
        continuous = nr * (N * (N + 2) + N) + n * N
        eq = nr * (N + 1 + V * (V - 1) + N) + (T - 1) * N + N
        ineq = nr * (N * (N - 1) + 3 * N)
    return {"binary": binary, "continuous": continuous, "equality": eq, "inequality": ineq}


# -- decoding ---------------------------------------------------------------------

@dataclass
class DayPlan:
    day: int                       # the day the routes are driven (stage t + 1)
    visited: tuple[int, ...]       # bin ids
    routes: list[list[int]]        # bin ids between depot visits, depot = 0
    distance_km: float
    detached_cycles: list[list[int]] = field(default_factory=list)

    @property
    def multi_trip(self) -> bool:
        return len(self.routes) > 1


@dataclass
class NodeRecord:
    node: int
    stage: int
    probability: float
    collected_kg: np.ndarray
    inventory_kg: np.ndarray


@dataclass
class CollectionPlan:
    variant: str
    bin_ids: tuple[int, ...]
    days: list[DayPlan]
    nodes: list[NodeRecord]
    expected_collected_kg: float
    total_distance_km: float
    revenue: float
    travel_cost: float
    profit: float
    coordinates: tuple | None = None

    @property
    def multi_trip(self) -> bool:
        return any(d.multi_trip for d in self.days)

    @property
    def visits(self) -> int:
        return sum(len(d.visited) for d in self.days)

    def schedule(self) -> dict[int, tuple[int, ...]]:
        return {d.day: d.visited for d in self.days}

    def kpis(self) -> dict:
        return {
            "profit": self.profit,
            "revenue": self.revenue,
            "travel_cost": self.travel_cost,
            "expected_collected_kg": self.expected_collected_kg,
            "total_distance_km": self.total_distance_km,
            "visits": self.visits,
            "collection_days": sum(1 for d in self.days if d.visited),
            "kg_per_km": (self.expected_collected_kg / self.total_distance_km
                          if self.total_distance_km > 0 else None),
            "multi_trip": self.multi_trip,
        }

    def to_dict(self) -> dict:
        coords = None
        if self.coordinates is not None:
            where = {0: self.coordinates[0]}
            where.update({b: self.coordinates[k + 1] for k, b in enumerate(self.bin_ids)})
            coords = where
        days = []
        for d in self.days:
            rec = {"day": d.day, "visited": list(d.visited), "routes": [list(r) for r in d.routes],
                   "distance_km": d.distance_km, "multi_trip": d.multi_trip}
            if d.detached_cycles:
                rec["detached_cycles"] = d.detached_cycles
            if coords is not None:
                rec["route_coordinates"] = [[list(coords[v]) for v in r] for r in d.routes]
            days.append(rec)
        return {
            "variant": self.variant,
            "kpis": self.kpis(),
            "days": days,
            "nodes": [{"node": r.node, "stage": r.stage, "probability": r.probability,
                       "collected_kg": dict(zip(map(str, self.bin_ids), r.collected_kg.tolist())),
                       "inventory_kg": dict(zip(map(str, self.bin_ids), r.inventory_kg.tolist()))}
                      for r in self.nodes],
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")
        return path


def kpis_from_plan_dict(data: dict, selling_price_R: float, travel_cost_C: float) -> dict:
    """Recompute the KPI block of a saved plan from its days and node records.

    Uses the same arithmetic as :func:`decode_solution`, so the result equals
    the stored ``kpis`` exactly.
    """
    probs = np.array([rec["probability"] for rec in data["nodes"]], dtype=float)
    wv = np.array([list(rec["collected_kg"].values()) for rec in data["nodes"]], dtype=float)
    collected = float((probs[:, None] * wv).sum()) if wv.size else 0.0
    total_km = 0.0
    for d in data["days"]:
        total_km += d["distance_km"]
    revenue = selling_price_R * collected
    travel = -travel_cost_C * total_km
    return {
        "profit": revenue + travel,
        "revenue": revenue,
        "travel_cost": -travel,
        "expected_collected_kg": collected,
        "total_distance_km": total_km,
        "visits": sum(len(d["visited"]) for d in data["days"]),
        "collection_days": sum(1 for d in data["days"] if d["visited"]),
        "kg_per_km": collected / total_km if total_km > 0 else None,
        "multi_trip": any(d["multi_trip"] for d in data["days"]),
    }


def _directed_routes(arcs: set[tuple[int, int]], V: int):
    succ: dict[int, list[int]] = {}
    for i, j in sorted(arcs):
        succ.setdefault(i, []).append(j)
    for i, js in succ.items():
        if i != 0 and len(js) != 1:
            raise DecodeError(f"vertex {i} has {len(js)} outgoing arcs")
    used = set()
    routes = []
    for j in succ.get(0, []):
        route, cur = [0], 0
        nxt = j
        while True:
            used.add((cur, nxt))
            route.append(nxt)
            if nxt == 0:
                break
            if len(route) > V + 1 or nxt not in succ:
                raise DecodeError(f"route from the depot does not return: {route}")
            cur, nxt = nxt, succ[nxt][0]
        routes.append(route)
    rest = arcs - used
    cycles = []
    while rest:
        i, j = min(rest)
        cyc = [i]
        cur = i
        while True:
            nxt = succ[cur][0]
            rest.discard((cur, nxt))
            if nxt == i:
                break
            if len(cyc) > V:
                raise DecodeError("arcs do not decompose into cycles")
            cyc.append(nxt)
            cur = nxt
        cycles.append(cyc)
    return routes, cycles


def _undirected_routes(edges: set[tuple[int, int]], V: int):
    cd = V - 1
    adj: dict[int, list[int]] = {}
    for i, j in sorted(edges):
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    for v, nb in adj.items():
        if v not in (0, cd) and len(nb) != 2:
            raise DecodeError(f"bin vertex {v} has degree {len(nb)}")
    used: set[tuple[int, int]] = set()
    routes = []
    for start in (0, cd):
        for first in sorted(adj.get(start, [])):
            e = (min(start, first), max(start, first))
            if e in used:
                continue
            route, prev, cur = [start], start, first
            while True:
                used.add((min(prev, cur), max(prev, cur)))
                route.append(cur)
                if cur in (0, cd):
                    break
                if len(route) > V + 1:
                    raise DecodeError("path does not reach a depot")
                a, b_ = adj[cur]
                prev, cur = cur, (b_ if a == prev else a)
            routes.append(route)
    rest = edges - used
    cycles = []
    while rest:
        i, j = min(rest)
        cyc, prev, cur = [i], i, j
        rest.discard((i, j))
        while cur != i:
            cyc.append(cur)
            a, b_ = adj[cur]
            nxt = b_ if a == prev else a
            rest.discard((min(cur, nxt), max(cur, nxt)))
            prev, cur = cur, nxt
            if len(cyc) > V:
                raise DecodeError("edges do not decompose into cycles")
        cycles.append(cyc)
    return routes, cycles


def decode_solution(problem: MilpProblem, solution, instance: Instance | None = None,
                    tree: ScenarioTree | None = None, tol: float = 1e-6) -> CollectionPlan:
    """Reconstruct routes, schedules and inventories from a model assignment.

    ``solution`` is a :class:`MilpSolution` or an assignment vector.  The plan
    profit is recomputed from the decoded quantities and must agree with the
    model objective within ``tol``.
    """
    x = solution.x if isinstance(solution, MilpSolution) else np.asarray(solution, dtype=float)
    if x is None:
        raise DecodeError(f"solution has no assignment (status {solution.status.value})")
    meta = problem.meta
    variant, N, V = meta["variant"], meta["n_bins"], meta["vertices"]
    k0 = meta["first_stage"]
    ids = tuple(meta["bin_ids"])
    dist = meta["distances"]
    sym = variant == "Msym"
    scale = 0.5 if sym else 1.0
    xv = problem.value_of(x, "x")
    yv = problem.value_of(x, "y")
    days = []
    total_km = 0.0
    label = lambda v: 0 if v in (0, N + 1) else ids[v - 1]  # noqa: E731
    for t in range(xv.shape[0]):
        act = xv[t] > 0.5
        if sym:
            act = act | act.T
            ei, ej = np.nonzero(np.triu(act, 1))
            routes, cycles = _undirected_routes(set(zip(ei.tolist(), ej.tolist())), V)
            km = float((dist * act).sum()) * scale
        else:
            ai, aj = np.nonzero(act)
            routes, cycles = _directed_routes(set(zip(ai.tolist(), aj.tolist())), V)
            km = float((dist * act).sum())
        visited = tuple(ids[i] for i in np.flatnonzero(yv[t] > 0.5))
        on_routes = {label(v) for r in routes for v in r} | {label(v) for c in cycles for v in c}
        on_routes.discard(0)
        if on_routes != set(visited):
            raise DecodeError(f"stage {t + k0}: routed bins {sorted(on_routes)} differ from visits "
                              f"{sorted(visited)}")
        days.append(DayPlan(t + k0 + 1, visited, [[label(v) for v in r] for r in routes], km,
                            [[label(v) for v in c] for c in cycles]))
        total_km += km
    wv = problem.value_of(x, "w")
    uv = problem.value_of(x, "u")
    node_ids = meta["nodes"]
    stage_of = tree.stage if tree is not None else None
    probs = np.zeros(len(node_ids))
    # node probabilities recovered from the objective when no tree is given
    w_idx = problem.labels["w"]
    R = instance.parameters.R if instance is not None else None
    records = []
    for pos, n in enumerate(node_ids):
        if tree is not None:
            probs[pos] = tree.prob[n]
        elif R and w_idx[pos, 0] >= 0:
            probs[pos] = problem.c[w_idx[pos, 0]] / R
        records.append(NodeRecord(int(n), int(stage_of[n]) if stage_of is not None else -1,
                                  float(probs[pos]), wv[pos].copy(), uv[pos].copy()))
    collected = float((probs[:, None] * wv).sum())
    obj = problem.objective(x)
    travel = obj - float(problem.c[w_idx[w_idx >= 0]] @ x[w_idx[w_idx >= 0]])
    revenue = obj - travel
    if instance is not None:
        p = instance.parameters
        revenue = p.R * collected
        travel = -p.C * total_km
        profit = revenue + travel
        if abs(profit - obj) > tol * max(1.0, abs(obj)):
            raise DecodeError(f"recomputed profit {profit:.9g} differs from the objective {obj:.9g}")
    else:
        profit = obj
    coords = instance.coordinates if instance is not None else None
    return CollectionPlan(variant, ids, days, records, collected, total_km, revenue, -travel,
                          profit, coords)


# -- analytic oracle and worst-case instances --------------------------------------

def closed_form_profit_C0(instance: Instance, tree: ScenarioTree) -> float:
    """Optimal profit when travel is free: everything that accumulates is sold."""
    if instance.parameters.C != 0:
        raise ModelError("the closed form holds only for zero travel cost")
    exp_rates = tree.expected_rates()[1:]          # stages 2..T
    total = instance.initial_kg.sum() + (exp_rates * instance.capacity_kg).sum()
    return float(instance.parameters.R * total)


def worst_case_instance(n_bins: int = 2, horizon: int = 5, alpha=None, epsilon=None,
                        capacity_m3: float = 2.5, travel_cost: float = 1.0,
                        parameters: Parameters | None = None,
                        distances: DistanceMatrix | None = None) -> tuple[Instance, ScenarioTree]:
    """Instance on which a one-stage look-ahead rolling horizon cannot stay feasible.

    Bins start empty and receive nothing until stage ``T - 2``, then a
    fraction ``alpha_i`` of their volume at ``T - 1`` and the rest plus a
    margin ``epsilon_i`` (in m^3) at ``T``.  Selling is worthless (R = 0), so
    a myopic plan never visits at ``T - 1`` and overflows at ``T``.
    """
    N, T = int(n_bins), int(horizon)
    if N < 1 or T < 3:
        raise ModelError("need at least one bin and three stages")
    alpha = np.full(N, 0.5) if alpha is None else np.asarray(alpha, dtype=float)
    E = np.full(N, float(capacity_m3))
    epsilon = 0.2 * alpha * E if epsilon is None else np.asarray(epsilon, dtype=float)
    if alpha.shape != (N,) or epsilon.shape != (N,):
        raise ModelError("alpha and epsilon need one entry per bin")
    if np.any((alpha <= 0) | (alpha >= 1)):
        raise ModelError("alpha must lie in (0, 1)")
    if np.any((epsilon <= 0) | (epsilon > alpha * E)):
        raise ModelError("epsilon must lie in (0, alpha * E]")
    base = parameters or Parameters(travel_cost_per_km=travel_cost, horizon=T)
    params = Parameters(base.C, 0.0, base.Q, base.B, base.big_m, T)
    if not params.Q > (E * params.B).sum():
        raise ModelError("vehicle capacity must exceed the total bin content")
    if distances is None:
        ang = 2 * np.pi * np.arange(N) / max(N, 1)
        pts = np.vstack([[0.0, 0.0], np.c_[np.cos(ang), np.sin(ang)] * 2.0 + 1.0])
        dd = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        distances = DistanceMatrix(np.round(dd, 6))
    bins = tuple(Bin(i + 1, float(E[i]), 0.0) for i in range(N))
    inst = Instance(params, bins, distances, name=f"worst_{N}_{T}")
    rates = np.zeros((T, N))
    rates[T - 2] = alpha
    rates[T - 1] = (1 - alpha) + epsilon / E
    return inst, ScenarioTree.single_path(rates, inst.bin_ids)
