"""Problem instances: parameters, bins, distances, fill histories.

All waste quantities are handled in kg inside the models; the instance keeps
bin capacities in m^3 and exposes the kg conversions (``E_i * B``) once.

Instance file (JSON, ``schema_version`` 1)::

    {
      "schema_version": 1,
      "name": "inst_1_9",
      "parameters": {"travel_cost_per_km": 1.0, "selling_price": 0.30,
                     "vehicle_capacity": 2000.0, "waste_density": 30.0,
                     "big_m": 100000.0, "horizon": 6},
      "bins": [{"id": 1, "capacity_m3": 2.5, "initial_fill": 0.2}, ...],
      "distance_matrix": [[0.0, 1.2, ...], ...],      # km, row-major, depot = row 0
      "coordinates": [[x0, y0], [x1, y1], ...]        # optional, depot first
    }

Bins are listed in matrix order: row/column ``k`` of the matrix belongs to the
``k``-th bin of the list.  Fill-history files are CSV with header
``bin_id,day_index,fill_fraction``.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class InstanceError(ValueError):
    """Invalid instance data (load or validation failure)."""


class IngestionError(InstanceError):
    pass


class DataQualityError(InstanceError):
    pass


@dataclass(frozen=True)
class Parameters:
    """Deterministic parameters; defaults are the case-study values."""

    travel_cost_per_km: float = 1.0       # C
    selling_price: float = 0.30           # R, per kg
    vehicle_capacity: float = 2000.0      # Q, kg
    waste_density: float = 30.0           # B, kg/m^3
    big_m: float = 1e5
    horizon: int = 6                      # T

    def __post_init__(self):
        if self.travel_cost_per_km < 0:
            raise InstanceError("travel cost C must be >= 0")
        if self.selling_price < 0:
            raise InstanceError("selling price R must be >= 0")
        if not self.vehicle_capacity > 0:
            raise InstanceError("vehicle capacity Q must be > 0")
        if not self.waste_density > 0:
            raise InstanceError("waste density B must be > 0")
        if int(self.horizon) != self.horizon or self.horizon < 2:
            raise InstanceError("horizon T must be an integer >= 2")
        if not self.big_m > self.vehicle_capacity:
            raise InstanceError("big_m must exceed the vehicle capacity")

    @property
    def C(self) -> float:
        return self.travel_cost_per_km

    @property
    def R(self) -> float:
        return self.selling_price

    @property
    def Q(self) -> float:
        return self.vehicle_capacity

    @property
    def B(self) -> float:
        return self.waste_density

    @property
    def T(self) -> int:
        return int(self.horizon)


@dataclass(frozen=True)
class Bin:
    id: int
    capacity_m3: float = 2.5
    initial_fill: float = 0.0

    def __post_init__(self):
        if not self.capacity_m3 > 0:
            raise InstanceError(f"bin {self.id}: capacity must be > 0")
        if not 0.0 <= self.initial_fill <= 1.0:
            raise InstanceError(f"bin {self.id}: initial fill {self.initial_fill} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Square distance matrix in km over the depot (index 0) and the bins."""

    values: np.ndarray
    original: "DistanceMatrix | None" = None

    def __post_init__(self):
        d = np.array(self.values, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InstanceError(f"distance matrix must be square, got shape {d.shape}")
        if not np.all(np.isfinite(d)):
            raise InstanceError("distance matrix has non-finite entries")
        if np.any(d < 0):
            i, j = np.argwhere(d < 0)[0]
            raise InstanceError(f"negative distance d[{i},{j}] = {d[i, j]}")
        if np.any(np.diag(d) != 0):
            i = int(np.flatnonzero(np.diag(d) != 0)[0])
            raise InstanceError(f"nonzero diagonal entry d[{i},{i}]")
        d.flags.writeable = False
        object.__setattr__(self, "values", d)

    def __eq__(self, other):
        return isinstance(other, DistanceMatrix) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.values, self.values.T))

    @property
    def is_asymmetric(self) -> bool:
        return not self.is_symmetric

    def asymmetry(self) -> float:
        """Mean relative gap |d_ij - d_ji| / mean(d_ij, d_ji) over pairs i < j."""
        d = self.values
        iu = np.triu_indices(self.size, 1)
        a, b = d[iu], d.T[iu]
        mean = 0.5 * (a + b)
        ok = mean > 0
        if not ok.any():
            return 0.0
        return float(np.mean(np.abs(a - b)[ok] / mean[ok]))


def symmetrize_distances(d: DistanceMatrix) -> DistanceMatrix:
    """Average each pair of opposite arcs; the input is kept as ``original``."""
    v = d.values
    sym = 0.5 * (v + v.T)
    return DistanceMatrix(sym, original=d.original or d)


@dataclass(frozen=True)
class Instance:
    parameters: Parameters
    bins: tuple[Bin, ...]
    distances: DistanceMatrix
    name: str = "instance"
    coordinates: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple(self.bins))
        if len(self.bins) == 0:
            raise InstanceError("instance has no bins")
        ids = [b.id for b in self.bins]
        if len(set(ids)) != len(ids):
            raise InstanceError("bin ids are not unique")
        if self.distances.size != len(self.bins) + 1:
            raise InstanceError(f"distance matrix has dimension {self.distances.size}, "
                                f"expected N+1 = {len(self.bins) + 1}")
        if self.coordinates is not None:
            coords = tuple(tuple(map(float, c)) for c in self.coordinates)
            if len(coords) != len(self.bins) + 1:
                raise InstanceError("coordinates must list the depot and every bin")
            object.__setattr__(self, "coordinates", coords)
        p = self.parameters
        cap = float(self.capacity_kg.max())
        if p.big_m < cap:
            warnings.warn(f"big_m={p.big_m} below the largest bin content {cap} kg", stacklevel=2)

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    @property
    def T(self) -> int:
        return self.parameters.T

    @property
    def bin_ids(self) -> tuple[int, ...]:
        return tuple(b.id for b in self.bins)

    @property
    def capacity_kg(self) -> np.ndarray:
        """E_i * B for every bin, in kg."""
        return np.array([b.capacity_m3 for b in self.bins]) * self.parameters.B

    @property
    def initial_kg(self) -> np.ndarray:
        return np.array([b.capacity_m3 * b.initial_fill for b in self.bins]) * self.parameters.B

    def with_parameters(self, **changes) -> "Instance":
        return replace(self, parameters=replace(self.parameters, **changes))

    def with_distances(self, d: DistanceMatrix) -> "Instance":
        return replace(self, distances=d)

    def to_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "name": self.name,
            "parameters": {k: (int(v) if k == "horizon" else float(v))
                           for k, v in asdict(self.parameters).items()},
            "bins": [{"id": b.id, "capacity_m3": b.capacity_m3, "initial_fill": b.initial_fill}
                     for b in self.bins],
            "distance_matrix": self.distances.values.tolist(),
        }
        if self.coordinates is not None:
            out["coordinates"] = [list(c) for c in self.coordinates]
        return out


def instance_from_dict(data: dict, overrides: dict | None = None) -> Instance:
    if data.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise InstanceError(f"unsupported schema_version {data.get('schema_version')}")
    for key in ("parameters", "bins", "distance_matrix"):
        if key not in data:
            raise InstanceError(f"instance file lacks {key!r}")
    params = dict(data["parameters"])
    params.update(overrides or {})
    unknown = set(params) - set(Parameters.__dataclass_fields__)
    if unknown:
        raise InstanceError(f"unknown parameters {sorted(unknown)}")
    bins = []
    for k, rec in enumerate(data["bins"]):
        try:
            bins.append(Bin(int(rec["id"]), float(rec.get("capacity_m3", 2.5)),
                            float(rec.get("initial_fill", 0.0))))
        except KeyError as exc:
            raise InstanceError(f"bin record {k} lacks field {exc}") from None
    try:
        d = DistanceMatrix(np.asarray(data["distance_matrix"], dtype=float))
    except ValueError as exc:
        raise InstanceError(f"distance matrix: {exc}") from None
    return Instance(Parameters(**params), tuple(bins), d, name=data.get("name", "instance"),
                    coordinates=data.get("coordinates"))


def load_instance(path: str | Path, overrides: dict | None = None) -> Instance:
    """Read and validate an instance file; ``overrides`` replace parameter fields."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InstanceError(f"instance file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON ({exc})") from None
    return instance_from_dict(data, overrides)


def save_instance(instance: Instance, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(instance.to_dict(), indent=1), encoding="utf-8")
    return path


# -- fill histories ---------------------------------------------------------

@dataclass(frozen=True)
class FillHistory:
    """Filling rates observed on collection days for one bin."""

    bin_id: int
    days: tuple[int, ...]
    fills: tuple[float, ...]

    def __post_init__(self):
        if len(self.days) != len(self.fills):
            raise IngestionError(f"bin {self.bin_id}: days and fills differ in length")
        d = np.asarray(self.days)
        if d.size > 1 and np.any(np.diff(d) <= 0):
            k = int(np.flatnonzero(np.diff(d) <= 0)[0])
            raise IngestionError(f"bin {self.bin_id}: day indices not strictly increasing "
                                 f"({self.days[k]} then {self.days[k + 1]})")
        for t, p in zip(self.days, self.fills):
            if not 0.0 <= p <= 1.0:
                raise DataQualityError(f"bin {self.bin_id}: fill {p} on day {t} outside [0, 1]")


@dataclass(frozen=True)
class DailyRates:
    """Per-day accumulation rates from ``first_day`` to ``last_day`` inclusive.

    The first day carries rate 0: nothing is known about accumulation before
    the first observed collection.
    """

    bin_id: int
    first_day: int
    rates: np.ndarray

    @property
    def last_day(self) -> int:
        return self.first_day + len(self.rates) - 1

    def on(self, day: int) -> float:
        return float(self.rates[day - self.first_day])


def derive_accumulation_trajectories(history: FillHistory) -> DailyRates:
    """Spread each observed fill evenly over the days since the previous collection.

    Bins are emptied at every observation, so the fill at collection ``t2``
    accumulated over ``t1+1 .. t2`` where ``t1`` is the previous collection.
    """
    if len(history.days) < 2:
        raise IngestionError(f"bin {history.bin_id}: at least two observations are needed")
    first, last = history.days[0], history.days[-1]
    rates = np.zeros(last - first + 1)
    for (t1, _), (t2, p2) in zip(zip(history.days, history.fills),
                                 zip(history.days[1:], history.fills[1:])):
        r = p2 / (t2 - t1)
        if not 0.0 <= r <= 1.0:
            raise DataQualityError(f"bin {history.bin_id}: rate {r} outside [0, 1] "
                                   f"on interval ({t1}, {t2}]")
        rates[t1 + 1 - first: t2 + 1 - first] = r
    rates.flags.writeable = False
    return DailyRates(history.bin_id, first, rates)


def load_fill_histories(path: str | Path) -> dict[int, FillHistory]:
    """Read ``bin_id,day_index,fill_fraction`` rows, grouped by bin."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"history file not found: {path}")
    rows: dict[int, list[tuple[int, float]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if not rec or rec[0].strip().startswith("#"):
                continue
            if lineno == 1 and not rec[0].strip().lstrip("-").isdigit():
                continue  # header
            try:
                b, t, p = int(rec[0]), int(rec[1]), float(rec[2])
            except (ValueError, IndexError):
                raise IngestionError(f"{path}:{lineno}: malformed row {rec!r}") from None
            rows.setdefault(b, []).append((t, p))
    out = {}
    for b, obs in sorted(rows.items()):
        obs.sort(key=lambda o: o[0])
        days = tuple(t for t, _ in obs)
        if len(set(days)) != len(days):
            raise IngestionError(f"bin {b}: duplicate day index in {path}")
        out[b] = FillHistory(b, days, tuple(p for _, p in obs))
    return out


def save_fill_histories(histories: dict[int, FillHistory], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_id", "day_index", "fill_fraction"])
        for b in sorted(histories):
            h = histories[b]
            for t, p in zip(h.days, h.fills):
                w.writerow([b, t, repr(float(p))])
    return path


def common_span(daily: dict[int, DailyRates]) -> tuple[int, int]:
    """Days observed for every bin (first day excluded: it has no rate)."""
    start = max(d.first_day + 1 for d in daily.values())
    end = min(d.last_day for d in daily.values())
    if end < start:
        raise IngestionError("bin histories do not overlap")
    return start, end


# -- synthetic data -----------------------------------------------------------

@dataclass
class SyntheticCity:
    """A master instance with matching fill histories, standing in for field data."""

    instance: Instance
    histories: dict[int, FillHistory] = field(default_factory=dict)


def synthetic_city(n_bins: int = 121, seed: int = 0, weeks: int = 15, days_per_week: int = 6,
                   collections: int = 20, asymmetry: float = 0.06, extent_km: float = 8.0,
                   depot_offset_km: float = 2.0, parameters: Parameters | None = None) -> SyntheticCity:
    """Random bins on a square with road-like distances and collection-day fill records.

    Distances are Euclidean times a detour factor with multiplicative noise of
    relative size ``asymmetry`` per direction.  Each bin has a mean daily rate
    drawn from a Beta law; daily rates fluctuate around it and a bin's fill on
    a collection day is the sum since the previous collection (capped at 1).
    """
    rng = np.random.default_rng(seed)
    params = parameters or Parameters()
    pts = rng.uniform(0, extent_km, size=(n_bins, 2))
    depot = np.array([-depot_offset_km, extent_km / 2])
    coords = np.vstack([depot, pts])
    diff = coords[:, None, :] - coords[None, :, :]
    eu = np.sqrt((diff ** 2).sum(-1)) * 1.3
    noise = rng.uniform(1 - asymmetry, 1 + asymmetry, size=eu.shape)
    d = np.round(eu * noise, 3)
    np.fill_diagonal(d, 0.0)
    span = weeks * days_per_week
    coll_days = np.sort(rng.choice(np.arange(2, span + 1), size=collections - 1, replace=False))
    coll_days = np.concatenate([[1], coll_days])
    mean_rate = rng.beta(2.0, 14.0, size=n_bins)
    daily = np.clip(mean_rate[:, None] * rng.lognormal(0.0, 0.35, size=(n_bins, span + 1)), 0.0, 1.0)
    histories = {}
    bins = []
    for i in range(n_bins):
        fills = [float(np.clip(rng.uniform(0.0, 0.4), 0, 1))]
        for t1, t2 in zip(coll_days[:-1], coll_days[1:]):
            # constant-rate derivation caps the mean rate at 1
            fills.append(float(min(1.0, daily[i, t1 + 1:t2 + 1].sum())))
        histories[i + 1] = FillHistory(i + 1, tuple(int(t) for t in coll_days), tuple(fills))
        bins.append(Bin(i + 1, 2.5, round(fills[0], 4)))
    inst = Instance(params, tuple(bins), DistanceMatrix(d), name=f"city_{n_bins}",
                    coordinates=tuple(map(tuple, np.round(coords, 4))))
    return SyntheticCity(inst, histories)


def draw_instance(master: Instance, n_bins: int, draw: int, seed: int = 0) -> Instance:
    """Sub-instance of ``n_bins`` bins drawn at random from ``master`` (named inst_<draw>_<n>)."""
    if not 1 <= n_bins <= master.n_bins:
        raise InstanceError(f"cannot draw {n_bins} bins from {master.n_bins}")
    rng = np.random.default_rng([seed, draw, n_bins])
    pick = np.sort(rng.choice(master.n_bins, size=n_bins, replace=False))
    rows = np.concatenate([[0], pick + 1])
    d = master.distances.values[np.ix_(rows, rows)]
    coords = None
    if master.coordinates is not None:
        coords = tuple(master.coordinates[r] for r in rows)
    return Instance(master.parameters, tuple(master.bins[k] for k in pick), DistanceMatrix(d),
                    name=f"inst_{draw}_{n_bins}", coordinates=coords)


def random_instance(n_bins: int, horizon: int, seed: int = 0, travel_cost: float = 1.0,
                    selling_price: float = 0.30, symmetric: bool = False, max_initial: float = 0.5,
                    capacity_m3: float = 2.5, vehicle_capacity: float = 2000.0,
                    extent_km: float = 5.0) -> Instance:
    """Small random instance on a square; distances are rounded Euclidean
    (optionally perturbed per direction when ``symmetric`` is false)."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, extent_km, size=(n_bins + 1, 2))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    if not symmetric:
        d = d * rng.uniform(0.95, 1.05, size=d.shape)
    d = np.round(d, 3)
    if symmetric:
        d = np.triu(d, 1) + np.triu(d, 1).T
    np.fill_diagonal(d, 0.0)
    params = Parameters(travel_cost, selling_price, vehicle_capacity, 30.0, 1e5, horizon)
    bins = tuple(Bin(i + 1, capacity_m3, round(float(rng.uniform(0, max_initial)), 4))
                 for i in range(n_bins))
    return Instance(params, bins, DistanceMatrix(d), name=f"rand_{n_bins}_{seed}",
                    coordinates=tuple(map(tuple, np.round(pts, 4))))
