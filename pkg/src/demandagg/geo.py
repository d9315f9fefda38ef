"""Spherical geometry helpers: great-circle distance, longitude frames, centroids.

All distances are in nautical miles on a sphere of mean Earth radius.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

EARTH_RADIUS_NM = 3440.065


def normalize_lon(lon):
    """Wrap longitude(s) into [-180, 180)."""
    return (np.asarray(lon, dtype=float) + 180.0) % 360.0 - 180.0


@dataclass(frozen=True)
class GeoPoint:
    lat_deg: float
    lon_deg: float

    def __post_init__(self):
        lat = float(self.lat_deg)
        lon = float(self.lon_deg)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lat_deg", lat)
        object.__setattr__(self, "lon_deg", float(normalize_lon(lon)))


@dataclass(frozen=True)
class LonFrame:
    """Rotated longitude axis whose working range is ``[offset, offset + 360)``.

    ``unwrap`` maps raw longitudes into the working range so that a region
    straddling the antimeridian becomes one contiguous interval; ``wrap`` maps
    back to ``[-180, 180)``.  ``fallback`` is set when :func:`make_frame`
    could not find a usable gap.
    """

    offset_deg: float = 0.0
    fallback: bool = False

    def unwrap(self, lon):
        lon = np.asarray(lon, dtype=float)
        out = self.offset_deg + (lon - self.offset_deg) % 360.0
        return float(out) if out.ndim == 0 else out

    def wrap(self, x):
        out = normalize_lon(x)
        return float(out) if out.ndim == 0 else out


def haversine_nm(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in nautical miles."""
    return float(haversine_nm_array(a.lat_deg, a.lon_deg, b.lat_deg, b.lon_deg))


def haversine_nm_array(lat1, lon1, lat2, lon2):
    """Vectorised haversine distance (nmi); arguments broadcast like numpy."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dtheta = np.radians(np.asarray(lon2, dtype=float) - np.asarray(lon1, dtype=float))
    cc = np.cos(phi1) * np.cos(phi2)
    h = np.sin(dphi / 2.0) ** 2 + cc * np.sin(dtheta / 2.0) ** 2
    # 1 - h is the haversine to the antipode; summing it directly keeps
    # precision where arcsin(sqrt(h)) would lose half the digits
    hc = np.sin((phi1 + phi2) / 2.0) ** 2 + cc * np.cos(dtheta / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_NM * np.arctan2(np.sqrt(h), np.sqrt(hc))


def make_frame(lons: Sequence[float], min_gap_deg: float = 1.0) -> LonFrame:
    """Choose the longitude frame giving the tightest contiguous span.

    Candidate offsets are 0 and every input longitude (mod 360); the one with
    the smallest unwrapped span wins, ties going to the smallest offset.  If
    the largest empty arc between inputs is narrower than ``min_gap_deg`` the
    data wraps the globe and offset 0 is returned with ``fallback=True``.
    """
    lons = np.asarray(lons, dtype=float)
    if lons.size == 0:
        raise ValueError("make_frame needs at least one longitude")
    pos = np.unique(lons % 360.0)
    gaps = np.diff(np.append(pos, pos[0] + 360.0))
    if pos.size > 1 and gaps.max() < min_gap_deg:
        warnings.warn("longitudes cover the whole globe; using offset 0", stacklevel=2)
        return LonFrame(0.0, fallback=True)

    best_offset, best_span = None, math.inf
    for offset in np.concatenate(([0.0], pos)):
        u = offset + (pos - offset) % 360.0
        span = float(u.max() - u.min())
        if span < best_span - 1e-12 or (abs(span - best_span) <= 1e-12 and offset < best_offset):
            best_offset, best_span = float(offset), span
    return LonFrame(best_offset)


def weighted_centroid(points: Sequence[GeoPoint], weights, frame: LonFrame) -> GeoPoint:
    """Weighted mean of latitudes and frame-unwrapped longitudes."""
    if len(points) == 0 or len(points) != len(weights):
        raise ValueError("points and weights must be non-empty and equally long")
    lat = np.array([p.lat_deg for p in points])
    lon = np.array([p.lon_deg for p in points])
    lat_c, lon_c = weighted_centroid_arrays(lat, lon, np.asarray(weights, dtype=float), frame)
    return GeoPoint(lat_c, lon_c)


def weighted_centroid_arrays(lat, lon, weights, frame: LonFrame) -> tuple[float, float]:
    """Array form of :func:`weighted_centroid`; returns wrapped ``(lat, lon)``."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    total = weights.sum()
    if not total > 0:
        raise ValueError("total weight is zero: degenerate zone")
    lat_c = float((weights * lat).sum() / total)
    lon_c = float((weights * frame.unwrap(lon)).sum() / total)
    return lat_c, frame.wrap(lon_c)
