"""Scenario trees for bin accumulation rates.

Trajectories are sampled from a conditional kernel density estimate fitted
to historical weekly trajectories, and a tree with a prescribed branching
structure is fitted to the samples by stochastic approximation: each sample
pulls the closest root-to-leaf path of the tree towards itself, and branch
probabilities are the visit frequencies.

Tree file (JSON)::

    {"bin_ids": [1, 2], "nodes": [{"id": 0, "parent": -1, "stage": 1,
      "probability": 1.0, "rates": [0.0, 0.0]}, ...]}
"""

from __future__ import annotations

import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .instance import DailyRates, common_span
from .markers import NEG_INF, is_finite, to_json

log = logging.getLogger(__name__)


class TreeError(ValueError):
    pass


# -- branching structures -----------------------------------------------------

@dataclass(frozen=True)
class BranchingStructure:
    """Per-stage branching counts ``b_1..b_T`` with ``b_1 = 1``."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(b) for b in self.counts)
        if len(counts) < 1 or counts[0] != 1:
            raise TreeError("branching structure must start with 1 (single root)")
        if any(b < 1 for b in counts):
            raise TreeError("branching counts must be >= 1")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def parse(cls, text: str) -> "BranchingStructure":
        try:
            return cls(tuple(int(p) for p in text.lower().replace(",", "x").split("x")))
        except ValueError:
            raise TreeError(f"cannot parse branching structure {text!r}") from None

    @property
    def T(self) -> int:
        return len(self.counts)

    @property
    def n_scenarios(self) -> int:
        return math.prod(self.counts)

    @property
    def n_nodes(self) -> int:
        return sum(math.prod(self.counts[:t + 1]) for t in range(self.T))

    def __str__(self) -> str:
        return "x".join(map(str, self.counts))


# -- scenario trees -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """Nodes listed stage by stage; node 0 is the root.

    ``parent[n]`` is -1 for the root, ``stage`` is 1-based, ``rates[n]`` holds
    the accumulation fraction of every bin at node ``n``.
    """

    parent: np.ndarray
    stage: np.ndarray
    prob: np.ndarray
    rates: np.ndarray
    bin_ids: tuple[int, ...] = ()

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64)
        stage = np.asarray(self.stage, dtype=np.int64)
        prob = np.asarray(self.prob, dtype=float)
        rates = np.atleast_2d(np.asarray(self.rates, dtype=float))
        n = parent.shape[0]
        if not (stage.shape == prob.shape == (n,)) or rates.shape[0] != n:
            raise TreeError("parent, stage, prob and rates must describe the same nodes")
        if n == 0 or parent[0] != -1 or stage[0] != 1:
            raise TreeError("node 0 must be the stage-1 root")
        if np.any(np.diff(stage) < 0):
            raise TreeError("nodes must be listed stage by stage")
        if np.any(parent[1:] < 0) or np.any(parent[1:] >= np.arange(1, n)):
            raise TreeError("every non-root node needs an earlier node as parent")
        bin_ids = tuple(self.bin_ids) or tuple(range(1, rates.shape[1] + 1))
        if len(bin_ids) != rates.shape[1]:
            raise TreeError("bin_ids do not match the rate columns")
        for name, arr in (("parent", parent), ("stage", stage), ("prob", prob), ("rates", rates)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "bin_ids", bin_ids)

    # construction

    @classmethod
    def from_branching(cls, structure: BranchingStructure, rates=None, cond_prob=None,
                       n_bins: int = 1, bin_ids=()) -> "ScenarioTree":
        """Regular tree; ``cond_prob[n]`` is the branch probability into node ``n``
        (uniform if omitted), ``rates`` defaults to zeros."""
        parents = [-1]
        stages = [1]
        frontier = [0]
        for t in range(1, structure.T):
            nxt = []
            for p in frontier:
                for _ in range(structure.counts[t]):
                    parents.append(p)
                    stages.append(t + 1)
                    nxt.append(len(parents) - 1)
            frontier = nxt
        parents = np.array(parents)
        n = len(parents)
        if cond_prob is None:
            cond = np.ones(n)
            cond[1:] = 1.0 / np.array([structure.counts[s - 1] for s in stages[1:]])
        else:
            cond = np.asarray(cond_prob, dtype=float)
        prob = _products(parents, cond)
        if rates is None:
            rates = np.zeros((n, len(bin_ids) or n_bins))
        return cls(parents, np.array(stages), prob, rates, tuple(bin_ids))

    @classmethod
    def single_path(cls, rates, bin_ids=()) -> "ScenarioTree":
        """Deterministic tree: one node per stage with the given ``(T, N)`` rates."""
        rates = np.atleast_2d(np.asarray(rates, dtype=float))
        T = rates.shape[0]
        return cls(np.arange(-1, T - 1), np.arange(1, T + 1), np.ones(T), rates, tuple(bin_ids))

    # structure queries

    @property
    def n_nodes(self) -> int:
        return self.parent.shape[0]

    @property
    def n_bins(self) -> int:
        return self.rates.shape[1]

    @property
    def T(self) -> int:
        return int(self.stage[-1])

    def nodes_at(self, t: int) -> np.ndarray:
        return np.flatnonzero(self.stage == t)

    def children(self, n: int) -> np.ndarray:
        return np.flatnonzero(self.parent == n)

    @property
    def leaves(self) -> np.ndarray:
        has_child = np.zeros(self.n_nodes, dtype=bool)
        has_child[self.parent[1:]] = True
        return np.flatnonzero(~has_child)

    def path(self, n: int) -> list[int]:
        """Nodes from the root to ``n``."""
        out = [int(n)]
        while self.parent[out[-1]] >= 0:
            out.append(int(self.parent[out[-1]]))
        return out[::-1]

    def leaf_paths(self) -> np.ndarray:
        """``(leaves, T)`` node indices; requires every leaf at the final stage."""
        leaves = self.leaves
        if np.any(self.stage[leaves] != self.T):
            raise TreeError("leaves must all sit at the final stage")
        return np.array([self.path(n) for n in leaves], dtype=np.int64).reshape(len(leaves), self.T)

    def conditional_prob(self) -> np.ndarray:
        cond = np.ones(self.n_nodes)
        p = self.prob[self.parent[1:]]
        with np.errstate(invalid="ignore", divide="ignore"):
            cond[1:] = np.where(p > 0, self.prob[1:] / np.where(p > 0, p, 1.0), 0.0)
        return cond

    def expected_rates(self) -> np.ndarray:
        """Probability-weighted mean rate per stage, shape ``(T, N)``."""
        out = np.zeros((self.T, self.n_bins))
        for t in range(1, self.T + 1):
            nodes = self.nodes_at(t)
            out[t - 1] = self.prob[nodes] @ self.rates[nodes]
        return out

    def select_bins(self, bin_ids) -> "ScenarioTree":
        """The same tree restricted to (and ordered by) ``bin_ids``."""
        bin_ids = tuple(int(b) for b in bin_ids)
        missing = [b for b in bin_ids if b not in self.bin_ids]
        if missing:
            raise TreeError(f"tree has no rates for bins {missing}")
        col = [self.bin_ids.index(b) for b in bin_ids]
        return ScenarioTree(self.parent, self.stage, self.prob, self.rates[:, col], bin_ids)

    def check(self) -> "ScenarioTree":
        diag = validate_tree(self)
        if not diag.ok:
            raise TreeError("invalid scenario tree: " + "; ".join(diag.violations))
        return self

    # serialisation

    def to_dict(self) -> dict:
        return {
            "bin_ids": list(self.bin_ids),
            "nodes": [{"id": n, "parent": int(self.parent[n]), "stage": int(self.stage[n]),
                       "probability": float(self.prob[n]), "rates": self.rates[n].tolist()}
                      for n in range(self.n_nodes)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioTree":
        nodes = data["nodes"]
        if [rec["id"] for rec in nodes] != list(range(len(nodes))):
            raise TreeError("node ids must be 0..n-1 in file order")
        return cls(np.array([rec["parent"] for rec in nodes]), np.array([rec["stage"] for rec in nodes]),
                   np.array([rec["probability"] for rec in nodes]),
                   np.array([rec["rates"] for rec in nodes], dtype=float).reshape(len(nodes), -1),
                   tuple(data.get("bin_ids", ())))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioTree":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise TreeError(f"tree file not found: {path}") from None
        except (KeyError, json.JSONDecodeError) as exc:
            raise TreeError(f"{path}: malformed tree file ({exc})") from None

    def __eq__(self, other):
        return (isinstance(other, ScenarioTree) and self.bin_ids == other.bin_ids
                and all(np.array_equal(getattr(self, k), getattr(other, k))
                        for k in ("parent", "stage", "prob", "rates")))


def _products(parents: np.ndarray, cond: np.ndarray) -> np.ndarray:
    prob = np.empty(len(parents))
    prob[0] = cond[0]
    for n in range(1, len(parents)):
        prob[n] = prob[parents[n]] * cond[n]
    return prob


@dataclass
class TreeDiagnostics:
    stage_mass: dict[int, float]
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_tree(tree: ScenarioTree, tol: float = 1e-9) -> TreeDiagnostics:
    """Collect every invariant violation; never raises."""
    v: list[str] = []
    stage_mass = {}
    for t in range(1, tree.T + 1):
        nodes = tree.nodes_at(t)
        m = float(tree.prob[nodes].sum())
        stage_mass[t] = m
        if abs(m - 1.0) > tol:
            v.append(f"stage {t}: stage mass {m:.12g} != 1")
    if abs(tree.prob[0] - 1.0) > tol:
        v.append(f"root probability {tree.prob[0]} != 1")
    if np.any(tree.rates[0] != 0):
        v.append("root rates are not zero")
    for n in np.flatnonzero(tree.prob < 0):
        v.append(f"node {n}: negative probability {tree.prob[n]}")
    orphans = [n for n in range(1, tree.n_nodes) if tree.stage[tree.parent[n]] != tree.stage[n] - 1]
    for n in orphans:
        v.append(f"node {n}: parent {tree.parent[n]} is not in the previous stage")
    bad = np.argwhere((tree.rates < 0) | (tree.rates > 1) | ~np.isfinite(tree.rates))
    for n, i in bad[:20]:
        v.append(f"node {n}, bin {tree.bin_ids[i]}: rate {tree.rates[n, i]} outside [0, 1]")
    # children must split their parent's mass
    for p in range(tree.n_nodes):
        ch = tree.children(p)
        if ch.size and abs(tree.prob[ch].sum() - tree.prob[p]) > tol:
            v.append(f"node {p}: children mass {tree.prob[ch].sum():.12g} != {tree.prob[p]:.12g}")
    leaves = tree.leaves
    short = leaves[tree.stage[leaves] != tree.T]
    if short.size:
        v.append(f"leaves before the final stage: {short.tolist()[:10]}")
    return TreeDiagnostics(stage_mass, v)


# -- trajectory bank and sampler ---------------------------------------------

@dataclass(frozen=True, eq=False)
class TrajectoryBank:
    """Historical weekly trajectories, ``data[o, t, i]`` = rate of bin ``i`` on day ``t``.

    Trajectories are stored in canonical (lexicographic) order so that
    everything downstream is independent of the order they were supplied in.
    """

    data: np.ndarray
    bin_ids: tuple[int, ...] = ()

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.ndim != 3 or d.shape[0] == 0:
            raise TreeError("bank data must have shape (observations, T, bins) with observations >= 1")
        if np.any((d < 0) | (d > 1)) or not np.all(np.isfinite(d)):
            raise TreeError("bank rates must lie in [0, 1]")
        d[:, 0, :] = 0.0
        flat = d.reshape(d.shape[0], -1)
        d = d[np.lexsort(flat.T[::-1])]
        d.flags.writeable = False
        object.__setattr__(self, "data", d)
        ids = tuple(self.bin_ids) or tuple(range(1, d.shape[2] + 1))
        if len(ids) != d.shape[2]:
            raise TreeError("bin_ids do not match the bank")
        object.__setattr__(self, "bin_ids", ids)

    @property
    def n_obs(self) -> int:
        return self.data.shape[0]

    @property
    def T(self) -> int:
        return self.data.shape[1]

    @property
    def n_bins(self) -> int:
        return self.data.shape[2]

    def select_bins(self, bin_ids) -> "TrajectoryBank":
        col = [self.bin_ids.index(b) for b in bin_ids]
        return TrajectoryBank(self.data[:, :, col], tuple(bin_ids))


def build_bank(daily: dict[int, DailyRates], T: int, bin_ids=None) -> TrajectoryBank:
    """Cut the common observed span into consecutive, non-overlapping ``T``-day windows."""
    bin_ids = tuple(bin_ids) if bin_ids is not None else tuple(sorted(daily))
    sub = {b: daily[b] for b in bin_ids}
    start, end = common_span(sub)
    n_win = (end - start + 1) // T
    if n_win < 1:
        raise TreeError(f"common span {start}..{end} is shorter than T={T}")
    data = np.empty((n_win, T, len(bin_ids)))
    for k, b in enumerate(bin_ids):
        r = sub[b]
        seg = np.array([r.on(start + d) for d in range(n_win * T)])
        data[:, :, k] = seg.reshape(n_win, T)
    return TrajectoryBank(data, bin_ids)


def sample_std(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.std(v, ddof=1)) if v.size >= 2 else 0.0


def silverman_bandwidth(sigma: float, n_obs: int, dim: int) -> float:
    """Rule-of-thumb bandwidth ``sigma * n_obs ** (-1 / (dim + 4))``."""
    if n_obs < 1 or dim < 1:
        raise ValueError("n_obs and dim must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return float(sigma) * float(n_obs) ** (-1.0 / (dim + 4))


def logistic_density(u):
    u = np.abs(u)  # symmetric; avoids overflow in exp(-u) for negative u
    e = np.exp(-u)
    return e / (1.0 + e) ** 2


def logistic_log_density(u):
    u = np.abs(u)
    return -u - 2.0 * np.log1p(np.exp(-u))


@dataclass(frozen=True)
class SamplerState:
    """Initial weights, per-stage per-bin bandwidths, kernel tag and seed."""

    weights: np.ndarray
    bandwidth: np.ndarray       # (T, N)
    kernel: str = "logistic"
    seed: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise TreeError("sampler weights must be non-negative and sum to 1")
        if self.kernel != "logistic":
            raise TreeError("only the logistic kernel is implemented")

    @classmethod
    def for_bank(cls, bank: TrajectoryBank, seed: int = 0) -> "SamplerState":
        h = np.zeros((bank.T, bank.n_bins))
        for t in range(bank.T):
            for i in range(bank.n_bins):
                h[t, i] = silverman_bandwidth(sample_std(bank.data[:, t, i]), bank.n_obs, bank.n_bins)
        return cls(np.full(bank.n_obs, 1.0 / bank.n_obs), h, seed=seed)


def sample_trajectories(bank: TrajectoryBank, state: SamplerState, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` independent trajectories, shape ``(n, T, N)``.

    Per stage: pick a historical week with probability equal to its current
    weight, perturb its rates by bandwidth times a logistic draw, clamp to
    [0, 1], then reweight the weeks by the product kernel evaluated at the
    clamped sample.  Bins with zero bandwidth carry no information in the
    reweighting (all weeks agree there) and are skipped.
    """
    No, T, N = bank.data.shape
    out = np.zeros((n, T, N))
    logw = np.broadcast_to(np.log(np.maximum(state.weights, 1e-300)), (n, No)).copy()
    logw[:, state.weights == 0] = -np.inf
    for t in range(1, T):
        w = np.exp(logw - logw.max(axis=1, keepdims=True))
        cum = np.cumsum(w, axis=1)
        cum /= cum[:, -1:]
        alpha = rng.random(n)
        # first o with cum[o] >= alpha
        o_star = np.minimum((cum < alpha[:, None]).sum(axis=1), No - 1)
        u = rng.random((n, N))
        u = np.clip(u, 1e-16, 1 - 1e-16)
        kdraw = np.log(u / (1.0 - u))
        h = state.bandwidth[t]
        s = np.clip(bank.data[o_star, t, :] + h * kdraw, 0.0, 1.0)
        out[:, t, :] = s
        live = h > 0
        if live.any():
            z = (s[:, None, live] - bank.data[None, :, t, live]) / h[live]
            logw = logw + logistic_log_density(z).sum(axis=2) - np.log(h[live]).sum()
            bad = ~np.isfinite(logw).any(axis=1)
            if bad.any():
                log.info("weights vanished for %d samples at stage %d; reset to uniform", bad.sum(), t + 1)
                logw[bad] = 0.0
    return out


def sample_trajectory(bank: TrajectoryBank, state: SamplerState,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    rng = rng if rng is not None else np.random.default_rng(state.seed)
    return sample_trajectories(bank, state, 1, rng)[0]


# -- tree fitting ---------------------------------------------------------------

def fit_tree(bank: TrajectoryBank, structure: BranchingStructure, iterations: int = 10000,
             seed: int = 0, state: SamplerState | None = None) -> ScenarioTree:
    """Fit a tree with the given branching structure by stochastic approximation.

    Initial node states come from one sample per leaf.  Every iteration
    draws a sample path, finds the leaf whose root-to-leaf states are closest
    in Euclidean distance (lowest leaf index on ties), and moves each node on
    that path to the running mean of the samples it has matched.  Branch
    probabilities are visit frequencies; unvisited branches get probability 0.
    """
    if iterations < 1:
        raise TreeError("iterations must be >= 1")
    if structure.T != bank.T:
        raise TreeError(f"structure has {structure.T} stages but bank trajectories have {bank.T}")
    state = state or SamplerState.for_bank(bank, seed)
    rng = np.random.default_rng(seed)
    shape = ScenarioTree.from_branching(structure, n_bins=bank.n_bins)
    paths = shape.leaf_paths()
    L = paths.shape[0]
    init = sample_trajectories(bank, state, L, rng)
    states = np.zeros((shape.n_nodes, bank.n_bins))
    # the first leaf below a node seeds its state; later leaves do not overwrite
    for l in range(L - 1, -1, -1):
        states[paths[l]] = init[l]
    states[0] = 0.0
    samples = sample_trajectories(bank, state, iterations, rng)
    visits = np.zeros(shape.n_nodes, dtype=np.int64)
    stage_of = shape.stage - 1
    for k in range(iterations):
        xi = samples[k]
        d = ((states - xi[stage_of]) ** 2).sum(axis=1)
        cost = d[paths].sum(axis=1)
        best = paths[int(np.argmin(cost))]
        visits[best] += 1
        states[best] += (xi - states[best]) / visits[best][:, None]
    states[0] = 0.0
    np.clip(states, 0.0, 1.0, out=states)
    cond = np.ones(shape.n_nodes)
    pv = visits[shape.parent[1:]]
    cond[1:] = np.where(pv > 0, visits[1:] / np.maximum(pv, 1), 0.0)
    unvisited = int(np.sum(visits[1:] == 0))
    if unvisited:
        warnings.warn(f"{unvisited} tree nodes were never visited and get probability 0", stacklevel=2)
    prob = _products(shape.parent, cond)
    return ScenarioTree(shape.parent, shape.stage, prob, states, bank.bin_ids)


# -- in-sample stability ------------------------------------------------------------

@dataclass
class StabilityRow:
    structure: str
    scenarios: int
    nodes: int
    runs: int
    failures: int
    mean_profit: object
    mean_weight: float | None
    mean_distance: float | None
    mean_cpu: float | None
    profit_spread: float | None
    multistage_distance: str = "unavailable"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["mean_profit"] = to_json(self.mean_profit)
        return d


def stability_batch(bank: TrajectoryBank, structures, runs_per_structure: int,
                    solve_hook: Callable[[ScenarioTree], dict], iterations: int = 10000,
                    seed: int = 0) -> list[StabilityRow]:
    """Fit ``runs_per_structure`` trees per structure and average the hook's KPIs.

    ``solve_hook(tree)`` returns a dict with ``profit`` (number or marker),
    ``weight``, ``distance`` and optionally ``cpu``.  Runs that raise or
    return a non-finite profit are counted as failures; a structure with any
    failure reports its mean profit as ``NEG_INF``.
    """
    rows = []
    for s_idx, st in enumerate(structures):
        st = st if isinstance(st, BranchingStructure) else BranchingStructure.parse(str(st))
        profits, weights, dists, cpus = [], [], [], []
        failures = 0
        for r in range(runs_per_structure):
            tree = fit_tree(bank, st, iterations, seed=seed + 1000 * s_idx + r)
            t0 = time.perf_counter()
            try:
                res = solve_hook(tree)
            except Exception as exc:  # reported as a failed row, not re-raised
                log.warning("stability run %s/%d failed: %s", st, r, exc)
                failures += 1
                continue
            cpu = res.get("cpu", time.perf_counter() - t0)
            if not is_finite(res["profit"]):
                failures += 1
                continue
            profits.append(float(res["profit"]))
            weights.append(float(res["weight"]))
            dists.append(float(res["distance"]))
            cpus.append(float(cpu))

        def mean(v):
            return float(np.mean(v)) if v else None

        rows.append(StabilityRow(
            str(st), st.n_scenarios, st.n_nodes, runs_per_structure, failures,
            NEG_INF if failures or not profits else float(np.mean(profits)),
            mean(weights), mean(dists), mean(cpus),
            float(np.ptp(profits)) if profits else None))
    return rows


def random_tree(structure: BranchingStructure, n_bins: int, seed: int = 0, max_rate: float = 0.5,
                bin_ids=(), uneven: bool = True) -> ScenarioTree:
    """Tree with uniform random rates in ``[0, max_rate]`` and random branch probabilities."""
    rng = np.random.default_rng(seed)
    shape = ScenarioTree.from_branching(structure, n_bins=n_bins, bin_ids=bin_ids)
    cond = np.ones(shape.n_nodes)
    for p in range(shape.n_nodes):
        ch = shape.children(p)
        if ch.size:
            w = rng.uniform(0.2, 1.0, ch.size) if uneven else np.ones(ch.size)
            cond[ch] = w / w.sum()
    rates = np.round(rng.uniform(0, max_rate, size=(shape.n_nodes, n_bins)), 4)
    rates[0] = 0.0
    return ScenarioTree(shape.parent, shape.stage, _products(shape.parent, cond), rates, shape.bin_ids)
