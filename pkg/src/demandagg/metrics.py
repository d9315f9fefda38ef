"""Aggregation error metrics.

Distance errors compare each test event with the centroid of the zone it is
assigned to (great-circle, nautical miles).  Volume errors compare a static
per-zone monthly level with the observed monthly counts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .data import EventDataset, MonthlySeries
from .geo import haversine_nm_array
from .partition import Partition, assign_many


def _per_zone_distance(p: Partition, test: EventDataset, weights=None) -> np.ndarray:
    if len(test) == 0:
        return np.zeros(len(p))
    ids, _ = assign_many(p, test)
    d = haversine_nm_array(test.lat, test.lon, p.centroid_lat[ids], p.centroid_lon[ids])
    if weights is not None:
        d = d * weights
    return np.bincount(ids, weights=d, minlength=len(p))


def _total(per_zone: np.ndarray) -> float:
    # fixed zone-id order keeps totals bit-stable
    total = 0.0
    for v in per_zone:
        total += float(v)
    return total


def distance_error(p: Partition, test: EventDataset) -> tuple[float, np.ndarray]:
    """Total and per-zone distance from test events to their zone centroids."""
    per_zone = _per_zone_distance(p, test)
    return _total(per_zone), per_zone


def weighted_distance_error(p: Partition, test: EventDataset) -> tuple[float, np.ndarray]:
    """As :func:`distance_error`, each term scaled by ``assets_dispatched``."""
    per_zone = _per_zone_distance(p, test, test.assets)
    return _total(per_zone), per_zone


def _check_predictions(predictions, actual: MonthlySeries) -> np.ndarray:
    pred = np.asarray(predictions, dtype=float)
    if pred.shape != (len(actual.zones),):
        raise ValueError(f"predictions cover {pred.size} zones, actual has {len(actual.zones)}")
    return pred


def volume_error(predictions: Sequence[float], actual: MonthlySeries) -> float:
    """Sum over zones and months of |actual - predicted level|."""
    return _total(volume_error_by_zone(predictions, actual))


def volume_error_by_zone(predictions: Sequence[float], actual: MonthlySeries) -> np.ndarray:
    pred = _check_predictions(predictions, actual)
    return np.abs(actual.counts - pred[:, None]).sum(axis=1)


def signed_volume_series(predictions: Sequence[float], actual: MonthlySeries) -> np.ndarray:
    """Per-month sum of (actual - predicted); positive means under-prediction."""
    pred = _check_predictions(predictions, actual)
    diff = actual.counts - pred[:, None]
    out = np.zeros(diff.shape[1])
    for row in diff:
        out += row
    return out


@dataclass
class ErrorReport:
    aggregation: str
    n_zones: int
    d_e: float
    d_we: float
    v_e: float | None = None
    signed_monthly: list[float] = field(default_factory=list)
    months: list[str] = field(default_factory=list)
    per_zone_d_e: list[float] = field(default_factory=list)
    per_zone_d_we: list[float] = field(default_factory=list)
    per_zone_v_e: list[float] = field(default_factory=list)
    out_of_region: int = 0

    def to_dict(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "n_zones": self.n_zones,
            "d_e": self.d_e,
            "d_we": self.d_we,
            "v_e": self.v_e,
            "signed_monthly": dict(zip(self.months, self.signed_monthly)),
            "out_of_region": self.out_of_region,
            "per_zone": [
                {"zone": z, "d_e": self.per_zone_d_e[z], "d_we": self.per_zone_d_we[z],
                 "v_e": self.per_zone_v_e[z] if self.per_zone_v_e else None}
                for z in range(self.n_zones)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write_csv(self, out: TextIO) -> None:
        """Flat ``metric,zone,value`` rows; totals use zone ``all``."""
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("metric", "zone", "value"))
        for name, total, per_zone in (("d_e", self.d_e, self.per_zone_d_e),
                                      ("d_we", self.d_we, self.per_zone_d_we),
                                      ("v_e", self.v_e, self.per_zone_v_e)):
            if total is None:
                continue
            w.writerow((name, "all", repr(float(total))))
            for z, v in enumerate(per_zone):
                w.writerow((name, z, repr(float(v))))
        for m, v in zip(self.months, self.signed_monthly):
            w.writerow((f"signed[{m}]", "all", repr(float(v))))


def error_report(name: str, p: Partition, test: EventDataset, predictions=None,
                 actual: MonthlySeries | None = None) -> ErrorReport:
    """Collect every metric for one aggregation into an :class:`ErrorReport`."""
    d_e, pz = distance_error(p, test)
    d_we, pzw = weighted_distance_error(p, test)
    _, outside = assign_many(p, test)
    report = ErrorReport(name, len(p), d_e, d_we, per_zone_d_e=pz.tolist(), per_zone_d_we=pzw.tolist(),
                         out_of_region=outside)
    if predictions is not None and actual is not None:
        by_zone = volume_error_by_zone(predictions, actual)
        report.v_e = _total(by_zone)
        report.per_zone_v_e = by_zone.tolist()
        report.signed_monthly = signed_volume_series(predictions, actual).tolist()
        report.months = [str(m) for m in actual.months]
    return report
