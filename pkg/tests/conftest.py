import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from demandagg.data import DemandEvent, EventDataset, FilterRules, filter_events, split_by_date
from demandagg.geo import GeoPoint, LonFrame
from demandagg.partition import PACIFIC_REGION
from demandagg.synth import default_spec, generate

R_NM = 3440.065


def cosine_law_nm(lat1, lon1, lat2, lon2):
    """Spherical law of cosines; independent of the haversine code path."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return R_NM * math.acos(max(-1.0, min(1.0, c)))


def loop_haversine_nm(lat1, lon1, lat2, lon2):
    """Scalar haversine written with the math module only."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    a = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2
    return 2 * R_NM * math.asin(math.sqrt(min(1.0, a)))


def make_event(i, lat, lon, when="2013-04-07T15:02:00", acts=1, assets=0, group=None, category="sar"):
    ts = datetime.fromisoformat(when).replace(tzinfo=timezone.utc) if isinstance(when, str) else when
    return DemandEvent(f"e{i}", ts, GeoPoint(lat, lon), acts, assets, group, category)


def random_dataset(rng, n, lat=(-5, 45), lon=(130, 215), start="2011-01-01", months=24, groups=None):
    """Events uniform over a box in offset-0 frame space and over ``months`` months."""
    t0 = datetime.fromisoformat(start).replace(tzinfo=timezone.utc)
    events = []
    for i in range(n):
        la = rng.uniform(*lat)
        lo = rng.uniform(*lon)
        ts = t0 + timedelta(days=float(rng.uniform(0, months * 30.4 - 1)))
        g = None if groups is None else groups[int(rng.integers(len(groups)))]
        events.append(DemandEvent(f"r{i}", ts, GeoPoint(la, lo), int(rng.integers(1, 6)), int(rng.integers(0, 5)), g))
    return EventDataset.from_events(events)


@pytest.fixture(scope="session")
def pacific():
    """Shipped fixture after filtering: (full, train, test)."""
    ds = generate(default_spec())
    ds = filter_events(ds, FilterRules(("medical_consultation",), PACIFIC_REGION, LonFrame(0.0)))
    train, test = split_by_date(ds, "2016-01")
    return ds, train, test


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
