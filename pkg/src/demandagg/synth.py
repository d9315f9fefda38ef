"""Synthetic spatiotemporal demand with known clusters and monthly rates."""

from __future__ import annotations

import calendar
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Mapping, Sequence

import numpy as np

from .data import DemandEvent, EventDataset, month_range, to_month
from .geo import GeoPoint, LonFrame


def _categorical(dist: Mapping, name: str) -> dict:
    dist = dict(dist)
    probs = np.array(list(dist.values()), dtype=float)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError(f"{name} probabilities must be non-negative and sum to 1")
    return dist


@dataclass(frozen=True)
class ClusterSpec:
    center: GeoPoint
    spread_deg: float
    monthly_rate: float
    weight_dist: Mapping[int, float] = field(default_factory=lambda: {1: 1.0})
    asset_dist: Mapping[int, float] = field(default_factory=lambda: {1: 1.0})
    group: str | None = None
    category_dist: Mapping[str, float] = field(default_factory=lambda: {"sar": 1.0})

    def __post_init__(self):
        if self.monthly_rate < 0:
            raise ValueError("monthly_rate must be >= 0")
        if self.spread_deg <= 0:
            raise ValueError("spread_deg must be > 0")
        for name in ("weight_dist", "asset_dist", "category_dist"):
            object.__setattr__(self, name, _categorical(getattr(self, name), name))
        if min(self.weight_dist) < 1:
            raise ValueError("total_activities values must be >= 1")
        if min(self.asset_dist) < 0:
            raise ValueError("assets_dispatched values must be >= 0")


@dataclass(frozen=True)
class SynthSpec:
    clusters: Sequence[ClusterSpec]
    months: tuple[str, str]
    seed: int
    frame: LonFrame = LonFrame()

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthSpec":
        clusters = []
        for c in d["clusters"]:
            clusters.append(ClusterSpec(
                GeoPoint(*c["center"]), float(c["spread_deg"]), float(c["monthly_rate"]),
                {int(k): v for k, v in c.get("weight_dist", {1: 1.0}).items()},
                {int(k): v for k, v in c.get("asset_dist", {1: 1.0}).items()},
                c.get("group"),
                dict(c.get("category_dist", {"sar": 1.0})),
            ))
        return cls(tuple(clusters), tuple(d["months"]), int(d["seed"]), LonFrame(float(d.get("frame_offset_deg", 0.0))))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "months": list(self.months),
            "frame_offset_deg": self.frame.offset_deg,
            "clusters": [
                {"center": [c.center.lat_deg, c.center.lon_deg], "spread_deg": c.spread_deg,
                 "monthly_rate": c.monthly_rate, "weight_dist": {str(k): v for k, v in c.weight_dist.items()},
                 "asset_dist": {str(k): v for k, v in c.asset_dist.items()}, "group": c.group,
                 "category_dist": dict(c.category_dist)}
                for c in self.clusters
            ],
        }


def _draw_from(dist: Mapping, rng: np.random.Generator, n: int) -> list:
    keys = list(dist)
    idx = rng.choice(len(keys), size=n, p=np.array([dist[k] for k in keys], dtype=float))
    return [keys[i] for i in idx]


def generate(spec: SynthSpec) -> EventDataset:
    """Draw a dataset; the result depends only on ``spec``.

    Per cluster and month the event count is Poisson(monthly_rate); locations
    are the centre plus isotropic Gaussian noise in frame space (latitude
    clipped to the poles); timestamps are uniform within the month.  Events
    are ordered by timestamp and numbered ``E000000`` onwards.
    """
    rng = np.random.default_rng(spec.seed)
    months = month_range(*spec.months)
    frame = spec.frame
    rows = []
    for ci, c in enumerate(spec.clusters):
        counts = rng.poisson(c.monthly_rate, size=len(months))
        n = int(counts.sum())
        if n == 0:
            continue
        lat = np.clip(c.center.lat_deg + rng.normal(0.0, c.spread_deg, n), -90.0, 90.0)
        lon = np.atleast_1d(frame.wrap(frame.unwrap(c.center.lon_deg) + rng.normal(0.0, c.spread_deg, n)))
        frac = rng.random(n)
        acts = _draw_from(c.weight_dist, rng, n)
        assets = _draw_from(c.asset_dist, rng, n)
        cats = _draw_from(c.category_dist, rng, n)
        k = 0
        for m, cnt in zip(months, counts):
            start = datetime.fromisoformat(f"{m}-01").replace(tzinfo=timezone.utc)
            days = calendar.monthrange(start.year, start.month)[1]
            seconds = days * 86400
            for _ in range(cnt):
                ts = start + timedelta(seconds=int(frac[k] * seconds))
                rows.append((ts, ci, k, float(lat[k]), float(lon[k]), int(acts[k]),
                             int(assets[k]), c.group, cats[k]))
                k += 1
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    events = [
        DemandEvent(f"E{i:06d}", ts, GeoPoint(lat, lon), a, s, g, cat)
        for i, (ts, _, _, lat, lon, a, s, g, cat) in enumerate(rows)
    ]
    span = (to_month(spec.months[0]), to_month(spec.months[1]))
    return EventDataset(tuple(events), span, {"source": "synth", "seed": spec.seed, "generated": len(events)})


_NEAR = {1: 0.55, 2: 0.3, 3: 0.15}
_FAR = {1: 0.2, 2: 0.3, 3: 0.25, 4: 0.15, 6: 0.1}
_NEAR_ASSETS = {1: 0.7, 2: 0.25, 3: 0.05}
_FAR_ASSETS = {1: 0.45, 2: 0.35, 3: 0.15, 4: 0.05}
_CATS = {"sar": 0.96, "medical_consultation": 0.04}


def default_spec(seed: int = 20110101) -> SynthSpec:
    """Two dense island areas (Hawaii-like, Guam-like) plus diffuse ocean background.

    Rates total 44.15 events/month, i.e. about 2650 events over 2011-2015 and
    1060 over 2016-2017.
    """
    def cl(lat, lon, spread, rate, group, near):
        return ClusterSpec(GeoPoint(lat, lon), spread, rate, _NEAR if near else _FAR,
                           _NEAR_ASSETS if near else _FAR_ASSETS, group, _CATS)

    clusters = (
        cl(21.40, -157.90, 0.35, 9.0, "hawaii_boat", True),
        cl(20.80, -156.30, 0.30, 4.0, "hawaii_boat", True),
        cl(22.05, -159.50, 0.30, 3.0, "hawaii_boat", True),
        cl(21.00, -158.00, 4.00, 8.0, "hawaii_cutter", False),
        cl(15.00, -170.00, 10.0, 6.0, "hawaii_cutter", False),
        cl(13.45, 144.75, 0.30, 5.0, "guam_boat", True),
        cl(14.00, 146.00, 3.50, 4.0, "guam_cutter", False),
        cl(10.00, 155.00, 8.00, 5.15, "guam_cutter", False),
    )
    return SynthSpec(clusters, ("2011-01", "2017-12"), seed, LonFrame(0.0))
