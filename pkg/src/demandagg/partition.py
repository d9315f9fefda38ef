"""Zone partitions: quadrat grids, weighted k-means zones and grouped clusters.

Grid cells and clustering work in a :class:`~demandagg.geo.LonFrame`'s
unwrapped ``(lat, lon)`` degree space; test-time assignment to cluster zones
uses great-circle distance.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np

from .data import Box, DemandEvent, EventDataset
from .geo import GeoPoint, LonFrame, haversine_nm_array, weighted_centroid_arrays

KMEANS_TOL_DEG = 1e-6
KMEANS_MAX_ITER = 100


@dataclass(frozen=True)
class CellBounds:
    """Half-open cell ``[lat_min, lat_max) x [lon_min, lon_max)`` in frame space.

    ``closed_lat``/``closed_lon`` make the upper edge inclusive; they are set
    on cells along the top row / rightmost column of their region box.
    """

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    closed_lat: bool = False
    closed_lon: bool = False

    def __post_init__(self):
        if not (self.lat_min < self.lat_max and self.lon_min < self.lon_max):
            raise ValueError(f"degenerate cell {self}")

    def contains(self, lat, ulon):
        lat_hi = lat <= self.lat_max if self.closed_lat else lat < self.lat_max
        lon_hi = ulon <= self.lon_max if self.closed_lon else ulon < self.lon_max
        return (lat >= self.lat_min) & lat_hi & (ulon >= self.lon_min) & lon_hi

    @property
    def center(self) -> tuple[float, float]:
        return (self.lat_min + self.lat_max) / 2.0, (self.lon_min + self.lon_max) / 2.0

    @property
    def area(self) -> float:
        return (self.lat_max - self.lat_min) * (self.lon_max - self.lon_min)


@dataclass(frozen=True)
class ClusterRule:
    """Nearest-centroid membership, optionally restricted to one event group."""

    group: str | None = None


@dataclass(frozen=True)
class Zone:
    id: int
    centroid: GeoPoint
    membership: Union[CellBounds, ClusterRule]
    training_count: int


@dataclass(frozen=True)
class Partition:
    zones: tuple[Zone, ...]
    kind: str
    frame: LonFrame
    group_index: Mapping[str, tuple[int, ...]] | None = None
    info: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "zones", tuple(self.zones))
        if self.kind not in ("grid", "zdm", "szdm"):
            raise ValueError(f"unknown partition kind {self.kind!r}")
        if [z.id for z in self.zones] != list(range(len(self.zones))):
            raise ValueError("zone ids must be dense 0..n-1 in order")

    def __len__(self):
        return len(self.zones)

    @property
    def centroid_lat(self) -> np.ndarray:
        return np.array([z.centroid.lat_deg for z in self.zones])

    @property
    def centroid_lon(self) -> np.ndarray:
        return np.array([z.centroid.lon_deg for z in self.zones])


# ---------------------------------------------------------------------------
# grids


def _cell_index(cells: Sequence[CellBounds], lat, ulon) -> np.ndarray:
    """Index of the first cell containing each point, or -1."""
    idx = np.full(np.shape(lat), -1, dtype=np.int64)
    for i, cell in enumerate(cells):
        hit = (idx < 0) & cell.contains(lat, ulon)
        idx[hit] = i
    return idx


def _grid_zones(cells: Sequence[CellBounds], train: EventDataset, frame: LonFrame) -> tuple[list[Zone], int]:
    if len(train):
        member = _cell_index(cells, train.lat, frame.unwrap(train.lon))
    else:
        member = np.zeros(0, dtype=np.int64)
    zones = []
    for i, cell in enumerate(cells):
        mask = member == i
        n = int(mask.sum())
        if n:
            lat, lon = weighted_centroid_arrays(train.lat[mask], train.lon[mask], train.activities[mask], frame)
        else:
            lat, ulon = cell.center
            lon = frame.wrap(ulon)
        zones.append(Zone(i, GeoPoint(lat, lon), cell, n))
    return zones, int((member < 0).sum())


def _make_grid_partition(cells, train, frame, info) -> Partition:
    zones, outside = _grid_zones(cells, train, frame)
    if outside:
        warnings.warn(f"{outside} training events fall outside the grid region", stacklevel=3)
    info = dict(info, train_outside=outside)
    return Partition(tuple(zones), "grid", frame, None, info)


def _axis_edges(lo: float, hi: float, cuts: np.ndarray) -> list[float]:
    inner = cuts[(cuts > lo) & (cuts < hi)]
    return [lo, *inner.tolist(), hi]


def build_grid(region: Sequence[Box], lat_cuts: Sequence[float], lon_cuts: Sequence[float],
               train: EventDataset, frame: LonFrame = LonFrame()) -> Partition:
    """Quadrat partition of ``region`` split along the given cut lines.

    Each box in ``region`` is divided by the cuts falling strictly inside it.
    Cells are ordered box by box, south to north, then west to east.  Empty
    cells are centred at their geometric centre with ``training_count`` 0.
    """
    lat_cuts = np.asarray(sorted(lat_cuts), dtype=float)
    lon_cuts = np.asarray(sorted(lon_cuts), dtype=float)
    for name, cuts in (("lat", lat_cuts), ("lon", lon_cuts)):
        if np.any(np.diff(cuts) == 0):
            raise ValueError(f"duplicate {name} cuts")
    if not region:
        raise ValueError("region must contain at least one box")
    for c in lat_cuts:
        if not any(b.lat_min <= c <= b.lat_max for b in region):
            raise ValueError(f"lat cut {c} lies outside the region")
    for c in lon_cuts:
        if not any(b.lon_min <= c <= b.lon_max for b in region):
            raise ValueError(f"lon cut {c} lies outside the region")

    cells = []
    for box in region:
        lat_edges = _axis_edges(box.lat_min, box.lat_max, lat_cuts)
        lon_edges = _axis_edges(box.lon_min, box.lon_max, lon_cuts)
        for i in range(len(lat_edges) - 1):
            for j in range(len(lon_edges) - 1):
                cells.append(CellBounds(
                    lat_edges[i], lat_edges[i + 1], lon_edges[j], lon_edges[j + 1],
                    closed_lat=i == len(lat_edges) - 2, closed_lon=j == len(lon_edges) - 2,
                ))
    return _make_grid_partition(cells, train, frame, {"region": [tuple(vars(b).values()) for b in region]})


def _subdivide(cell: CellBounds, step: float) -> list[CellBounds]:
    def edges(lo, hi):
        n = max(1, math.ceil((hi - lo) / step - 1e-9))
        return [lo + i * step for i in range(n)] + [hi]

    lat_e, lon_e = edges(cell.lat_min, cell.lat_max), edges(cell.lon_min, cell.lon_max)
    out = []
    for i in range(len(lat_e) - 1):
        for j in range(len(lon_e) - 1):
            out.append(CellBounds(
                lat_e[i], lat_e[i + 1], lon_e[j], lon_e[j + 1],
                closed_lat=cell.closed_lat and i == len(lat_e) - 2,
                closed_lon=cell.closed_lon and j == len(lon_e) - 2,
            ))
    return out


def top_cells_by_activity(p: Partition, train: EventDataset, q: int) -> list[int]:
    """Ids of the ``q`` zones carrying the most training total_activities (ties -> lower id)."""
    ids, _ = assign_many(p, train)
    load = np.bincount(ids, weights=train.activities, minlength=len(p)) if len(train) else np.zeros(len(p))
    order = sorted(range(len(p)), key=lambda z: (-load[z], z))
    return order[:q]


def refine_cells(p: Partition, q: int, cell_deg: float, train: EventDataset) -> Partition:
    """Replace the ``q`` busiest grid cells with ``cell_deg`` square sub-cells.

    Where ``cell_deg`` does not divide a cell's extent the last row/column of
    sub-cells is clipped to the parent cell so the tiling stays exact.
    """
    if p.kind != "grid":
        raise ValueError("refine_cells needs a grid partition")
    if not 1 <= q <= len(p):
        raise ValueError(f"q={q} must be in [1, {len(p)}]")
    if cell_deg <= 0:
        raise ValueError("cell_deg must be positive")
    chosen = set(top_cells_by_activity(p, train, q))
    cells = []
    for z in p.zones:
        if z.id in chosen:
            cells.extend(_subdivide(z.membership, cell_deg))
        else:
            cells.append(z.membership)
    info = dict(p.info, refined=sorted(chosen), refine_deg=cell_deg)
    info.pop("train_outside", None)
    return _make_grid_partition(cells, train, p.frame, info)


# ---------------------------------------------------------------------------
# weighted k-means


def rule_of_thumb_k(n_events: int) -> int:
    """Zone count ``round(sqrt(n / 2))``, at least 1."""
    if n_events < 1:
        raise ValueError("n_events must be >= 1")
    return max(1, int(math.floor(math.sqrt(n_events / 2.0) + 0.5)))


@dataclass
class KMeansResult:
    centers: np.ndarray  # (k, 2) in frame space
    labels: np.ndarray
    trace: list[float]  # objective at seeding, then after each update
    n_iter: int
    converged: bool


def _sqdist(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return (diff * diff).sum(axis=2)


def _objective(X, w, C, labels) -> float:
    diff = X - C[labels]
    return float((w * (diff * diff).sum(axis=1)).sum())


def _kmeanspp(X: np.ndarray, w: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    first = rng.choice(n, p=w / w.sum())
    centers = [X[first]]
    d2 = _sqdist(X, X[first][None, :])[:, 0]
    for _ in range(1, k):
        score = w * d2
        pick = rng.choice(n, p=score / score.sum())
        centers.append(X[pick])
        d2 = np.minimum(d2, _sqdist(X, X[pick][None, :])[:, 0])
    return np.array(centers)


def _weighted_means(X, w, labels, k) -> np.ndarray:
    wsum = np.bincount(labels, weights=w, minlength=k)
    return np.stack([np.bincount(labels, weights=w * X[:, d], minlength=k) / wsum for d in range(X.shape[1])], axis=1)


def kmeans_arrays(X: np.ndarray, w: np.ndarray, k: int, seed: int,
                  tol: float = KMEANS_TOL_DEG, max_iter: int = KMEANS_MAX_ITER) -> KMeansResult:
    """Weighted Lloyd iterations with weighted k-means++ seeding.

    Empty clusters are reseeded on the point currently farthest from its
    centre.  Stops when no centre moves more than ``tol`` or after
    ``max_iter`` updates.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("k-means weights must be positive")
    n_distinct = len(np.unique(X, axis=0))
    if not 1 <= k <= n_distinct:
        raise ValueError(f"k={k} exceeds the {n_distinct} distinct locations")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(X, w, k, rng)
    rows = np.arange(len(X))

    d2 = _sqdist(X, centers)
    labels = d2.argmin(axis=1)
    trace = [_objective(X, w, centers, labels)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sqdist(X, centers)
        labels = d2.argmin(axis=1)
        cost = d2[rows, labels]
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(cost.argmax())
            labels[far] = j
            cost[far] = 0.0
            centers[j] = X[far]
        new_centers = _weighted_means(X, w, labels, k)
        trace.append(_objective(X, w, new_centers, labels))
        shift = float(np.abs(new_centers - centers).max())
        centers = new_centers
        if shift < tol:
            converged = True
            break
    labels = _sqdist(X, centers).argmin(axis=1)
    return KMeansResult(centers, labels, trace, it, converged)


def _frame_xy(ds: EventDataset, frame: LonFrame) -> np.ndarray:
    return np.column_stack([ds.lat, frame.unwrap(ds.lon)])


def _cluster_zones(res: KMeansResult, ds: EventDataset, frame: LonFrame, first_id: int,
                   group: str | None) -> list[Zone]:
    counts = np.bincount(res.labels, minlength=len(res.centers))
    return [
        Zone(first_id + j, GeoPoint(float(c[0]), frame.wrap(float(c[1]))), ClusterRule(group), int(counts[j]))
        for j, c in enumerate(res.centers)
    ]


def weighted_kmeans(train: EventDataset, k: int, frame: LonFrame, seed: int) -> Partition:
    """ZDM-style zones from k-means weighted by each event's total_activities."""
    if len(train) == 0:
        raise ValueError("cannot cluster an empty dataset")
    res = kmeans_arrays(_frame_xy(train, frame), train.activities, k, seed)
    zones = _cluster_zones(res, train, frame, 0, None)
    info = {"k": k, "seed": seed, "trace": res.trace, "n_iter": res.n_iter,
            "converged": res.converged, "labels": res.labels}
    return Partition(tuple(zones), "zdm", frame, None, info)


def wcss(p: Partition, ds: EventDataset) -> float:
    """Weighted within-cluster sum of squares of a cluster partition (frame space)."""
    X = _frame_xy(ds, p.frame)
    C = np.column_stack([p.centroid_lat, p.frame.unwrap(p.centroid_lon)])
    labels = p.info["labels"]
    return _objective(X, ds.activities, C, labels)


def derive_seed(seed: int, *keys: int) -> int:
    """Stable child seed for (seed, keys...), independent of call order."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def knee_index(ks: Sequence[float], values: Sequence[float]) -> int:
    """Position of the interior point farthest from the endpoint chord.

    Both axes are rescaled to [0, 1] first so the answer does not depend on
    the units of ``values``.  Ties resolve to the smallest position.
    """
    x = np.asarray(ks, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(x) < 3:
        raise ValueError("need at least 3 points to locate a knee")
    xn = (x - x[0]) / (x[-1] - x[0])
    span = y[-1] - y[0]
    yn = (y - y[0]) / span if span != 0 else np.zeros_like(y)
    # chord runs (0, 0) -> (1, 1) in normalised space
    dist = np.abs(yn - xn) / math.sqrt(2.0)
    interior = dist[1:-1]
    best = interior.max()
    return 1 + int(np.flatnonzero(interior >= best - 1e-12)[0])


def wcss_curve(train: EventDataset, ks: Sequence[int], frame: LonFrame, seed: int,
               n_jobs: int = 1) -> list[float]:
    def one(k):
        return wcss(weighted_kmeans(train, k, frame, derive_seed(seed, k)), train)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            return list(ex.map(one, ks))
    return [one(k) for k in ks]


def elbow_k(train: EventDataset, k_range: tuple[int, int], frame: LonFrame, seed: int,
            n_jobs: int = 1) -> int:
    """Pick k at the knee of the weighted WCSS curve over inclusive ``k_range``."""
    lo, hi = k_range
    if hi - lo + 1 < 3:
        raise ValueError("k_range must span at least 3 values")
    if lo < 1:
        raise ValueError("k_range must start at 1 or above")
    ks = list(range(lo, hi + 1))
    curve = wcss_curve(train, ks, frame, seed, n_jobs)
    return ks[knee_index(ks, curve)]


def _n_distinct(ds: EventDataset) -> int:
    return len(np.unique(np.column_stack([ds.lat, ds.lon]), axis=0))


GroupKey = Union[str, Callable[[DemandEvent], "str | None"]]


def hierarchical_partition(train: EventDataset, group_key: GroupKey = "group",
                           per_group_k: Mapping[str, int] | str = "elbow", frame: LonFrame = LonFrame(),
                           seed: int = 0, k_max: int = 8, n_jobs: int = 1) -> Partition:
    """SZDM-style zones: cluster each event group separately, then concatenate.

    With ``per_group_k="elbow"`` each group's k is chosen by :func:`elbow_k`
    over ``1..min(k_max, distinct locations)``; groups with fewer than three
    distinct locations get a single zone.
    """
    key = (lambda e: getattr(e, group_key)) if isinstance(group_key, str) else group_key
    labels = [key(e) for e in train.events]
    missing = [e.id for e, g in zip(train.events, labels) if g is None or g == ""]
    if missing:
        raise ValueError(f"events without a group label: {', '.join(missing[:20])}")
    groups = sorted(set(labels))
    if not groups:
        raise ValueError("no training events to partition")
    if isinstance(per_group_k, str):
        if per_group_k != "elbow":
            raise ValueError(f"per_group_k must be a mapping or 'elbow', got {per_group_k!r}")
    else:
        absent = [g for g in groups if g not in per_group_k]
        if absent:
            raise ValueError(f"per_group_k lacks groups: {', '.join(absent)}")

    labels_arr = np.array(labels, dtype=object)

    def fit(gi_group):
        gi, g = gi_group
        idx = np.flatnonzero(labels_arr == g)
        sub = train.replace([train.events[i] for i in idx])
        gseed = derive_seed(seed, gi)
        if per_group_k == "elbow":
            hi = min(k_max, _n_distinct(sub))
            k = elbow_k(sub, (1, hi), frame, gseed) if hi >= 3 else 1
        else:
            k = int(per_group_k[g])
        return g, sub, k, kmeans_arrays(_frame_xy(sub, frame), sub.activities, k, derive_seed(gseed, k))

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            fitted = list(ex.map(fit, enumerate(groups)))
    else:
        fitted = [fit(item) for item in enumerate(groups)]

    zones: list[Zone] = []
    group_index = {}
    per_k = {}
    for g, sub, k, res in fitted:
        new = _cluster_zones(res, sub, frame, len(zones), g)
        group_index[g] = tuple(z.id for z in new)
        per_k[g] = k
        zones.extend(new)
    return Partition(tuple(zones), "szdm", frame, group_index, {"per_group_k": per_k, "seed": seed})


# ---------------------------------------------------------------------------
# assignment


def _nearest(lat, lon, clat, clon) -> np.ndarray:
    d = haversine_nm_array(np.asarray(lat)[:, None], np.asarray(lon)[:, None], clat[None, :], clon[None, :])
    return d.argmin(axis=1)


def assign_arrays(p: Partition, lat, lon, groups=None) -> tuple[np.ndarray, int]:
    """Zone id per point plus the number of grid points that fell outside every cell."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    clat, clon = p.centroid_lat, p.centroid_lon
    if lat.size == 0:
        return np.zeros(0, dtype=np.int64), 0
    if p.kind == "grid":
        ids = _cell_index([z.membership for z in p.zones], lat, p.frame.unwrap(lon))
        out = ids < 0
        if out.any():
            ids[out] = _nearest(lat[out], lon[out], clat, clon)
        return ids, int(out.sum())
    ids = _nearest(lat, lon, clat, clon).astype(np.int64)
    if p.kind == "szdm" and groups is not None and p.group_index:
        groups = np.asarray(groups, dtype=object)
        for g, zone_ids in p.group_index.items():
            sel = np.flatnonzero(groups == g)
            if sel.size:
                zid = np.asarray(zone_ids)
                ids[sel] = zid[_nearest(lat[sel], lon[sel], clat[zid], clon[zid])]
    return ids, 0


def assign_many(p: Partition, ds: EventDataset) -> tuple[np.ndarray, int]:
    groups = [e.group for e in ds.events] if p.kind == "szdm" else None
    return assign_arrays(p, ds.lat, ds.lon, groups)


def assign(p: Partition, e: DemandEvent) -> int:
    """Zone id for a single event."""
    ids, _ = assign_arrays(p, [e.location.lat_deg], [e.location.lon_deg], [e.group])
    return int(ids[0])


# ---------------------------------------------------------------------------
# serialisation


def partition_to_dict(p: Partition) -> dict:
    zones = []
    for z in p.zones:
        entry = {"id": z.id, "centroid": [z.centroid.lat_deg, z.centroid.lon_deg], "training_count": z.training_count}
        m = z.membership
        if isinstance(m, CellBounds):
            entry["cell"] = {"lat_min": m.lat_min, "lat_max": m.lat_max, "lon_min": m.lon_min,
                             "lon_max": m.lon_max, "closed_lat": m.closed_lat, "closed_lon": m.closed_lon}
        else:
            entry["cluster"] = {"group": m.group}
        zones.append(entry)
    out = {"kind": p.kind, "frame_offset_deg": p.frame.offset_deg, "zones": zones}
    if p.group_index is not None:
        out["group_index"] = {g: list(ids) for g, ids in sorted(p.group_index.items())}
    return out


def partition_from_dict(d: Mapping) -> Partition:
    zones = []
    for entry in d["zones"]:
        if "cell" in entry:
            membership = CellBounds(**entry["cell"])
        else:
            membership = ClusterRule(entry["cluster"].get("group"))
        lat, lon = entry["centroid"]
        zones.append(Zone(int(entry["id"]), GeoPoint(lat, lon), membership, int(entry["training_count"])))
    gi = d.get("group_index")
    if gi is not None:
        gi = {g: tuple(ids) for g, ids in gi.items()}
    return Partition(tuple(zones), d["kind"], LonFrame(float(d.get("frame_offset_deg", 0.0))), gi)


# ---------------------------------------------------------------------------
# presets and spec-driven construction

PACIFIC_REGION = (Box(-5.0, 45.0, 130.0, 215.0),)

# Nested quadrat presets over PACIFIC_REGION (frame offset 0: longitudes in [0, 360)).
GRID_PRESETS = {
    "grid1": {"lat_cuts": [], "lon_cuts": []},
    "grid2": {"lat_cuts": [], "lon_cuts": [180.0]},
    "grid8": {"lat_cuts": [10.0], "lon_cuts": [155.0, 180.0, 190.0]},
    "grid15": {"lat_cuts": [10.0, 25.0], "lon_cuts": [155.0, 165.0, 180.0, 190.0]},
    "grid43": {"lat_cuts": [10.0, 25.0], "lon_cuts": [155.0, 165.0, 180.0, 190.0],
               "refine": [{"q": 2, "cell_deg": 5.0}]},
    "grid91": {"lat_cuts": [10.0, 25.0], "lon_cuts": [155.0, 165.0, 180.0, 190.0],
               "refine": [{"q": 2, "cell_deg": 5.0}, {"q": 2, "cell_deg": 1.0}]},
}


def build_from_spec(spec: Mapping, train: EventDataset, frame: LonFrame = LonFrame(), n_jobs: int = 1) -> Partition:
    """Build a partition from a config mapping.

    Recognised kinds: ``grid`` (``preset`` or ``region``/``lat_cuts``/
    ``lon_cuts`` plus optional ``refine`` steps), ``zdm`` (``k`` as an int or
    ``"rule_of_thumb"``, ``seed``) and ``szdm`` (``per_group_k`` mapping or
    ``"elbow"``, ``k_max``, ``seed``).
    """
    kind = spec.get("kind")
    if kind == "grid":
        base = dict(GRID_PRESETS[spec["preset"]]) if "preset" in spec else {}
        base.update({k: v for k, v in spec.items() if k not in ("preset", "kind", "name")})
        region = tuple(Box.from_seq(b) for b in base["region"]) if "region" in base else PACIFIC_REGION
        p = build_grid(region, base.get("lat_cuts", []), base.get("lon_cuts", []), train, frame)
        for step in base.get("refine", []):
            p = refine_cells(p, int(step["q"]), float(step["cell_deg"]), train)
        return p
    if kind == "zdm":
        k = spec.get("k", "rule_of_thumb")
        if k == "rule_of_thumb":
            k = rule_of_thumb_k(len(train))
        return weighted_kmeans(train, int(k), frame, int(spec["seed"]))
    if kind == "szdm":
        return hierarchical_partition(train, spec.get("group_key", "group"), spec.get("per_group_k", "elbow"),
                                      frame, int(spec["seed"]), int(spec.get("k_max", 8)), n_jobs)
    raise ValueError(f"unknown partition kind {kind!r}")
