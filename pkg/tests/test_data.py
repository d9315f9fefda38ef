import dataclasses
import io
from collections import Counter

import numpy as np
import pytest

from conftest import make_event, random_dataset
from demandagg.data import (Box, DataError, EventDataset, FilterRules, ParseConfig, events_from_string,
                            filter_events, month_range, monthly_counts, parse_events, split_by_date, write_events,
                            write_rejects)
from demandagg.geo import GeoPoint, LonFrame
from demandagg.partition import ClusterRule, Partition, Zone, assign, weighted_kmeans

HEADER = "id,timestamp,lat,lon,total_activities,assets_dispatched,group,category\n"


def test_parse_three_rows():
    text = HEADER + (
        "a,2013-04-07T15:02:00Z,21.3,-157.9,2,1,hawaii_boat,sar\n"
        "b,2014-01-01T00:00:00Z,13.4,144.8,1,0,,sar\n"
        "c,2015-12-31T23:59:59Z,0,180,3,2,g,\n"
    )
    ds, rejects = events_from_string(text)
    assert len(ds) == 3 and rejects == []
    assert ds.events[1].group is None
    assert ds.events[2].location.lon_deg == -180.0
    assert ds.provenance["rows"] == 3
    assert str(ds.time_span[0]) == "2013-04" and str(ds.time_span[1]) == "2015-12"


def test_missing_gps_is_rejected():
    text = HEADER + "a,2013-04-07T15:02:00Z,,,1,0,,sar\n" + "".join(
        f"x{i},2013-04-07T15:02:00Z,1,1,1,0,,sar\n" for i in range(20))
    ds, rejects = events_from_string(text)
    assert len(ds) == 20
    assert rejects[0].row == 2 and "GPS" in rejects[0].reason
    buf = io.StringIO()
    write_rejects(rejects, buf)
    assert buf.getvalue().splitlines() == ["row,reason", "2,missing GPS coordinates"]


def _malformed_file(rng, n=1000, n_bad=17):
    bad_rows = set(rng.choice(n, n_bad, replace=False).tolist())
    kinds = ["lat", "ts", "acts", "assets", "range", "id"]
    lines = [HEADER]
    for i in range(n):
        row = [f"id{i}", "2012-05-06T07:08:09Z", "10.5", "170.25", "2", "1", "g", "sar"]
        if i in bad_rows:
            k = kinds[i % len(kinds)]
            if k == "lat":
                row[2] = ""
            elif k == "ts":
                row[1] = "not-a-date"
            elif k == "acts":
                row[4] = "0"
            elif k == "assets":
                row[5] = "-1"
            elif k == "range":
                row[2] = "95"
            else:
                row[0] = ""
        lines.append(",".join(row) + "\n")
    return "".join(lines), bad_rows


def test_generated_file_with_malformed_rows(rng):
    text, bad = _malformed_file(rng)
    ds, rejects = events_from_string(text)
    assert len(ds) == 983 and len(rejects) == 17
    assert {r.row - 2 for r in rejects} == bad


def test_reject_fraction_limit(rng):
    text, _ = _malformed_file(rng, n=100, n_bad=11)
    with pytest.raises(DataError, match="rejected"):
        events_from_string(text)
    ds, _ = events_from_string(text, max_reject_fraction=0.2)
    assert len(ds) == 89


def test_optional_columns_default_with_warning():
    text = "id,timestamp,lat,lon\na,2013-04-07T15:02:00Z,1,2\n"
    with pytest.warns(UserWarning) as rec:
        ds, _ = events_from_string(text)
    assert {str(w.message).split("'")[1] for w in rec} == {"total_activities", "assets_dispatched"}
    assert ds.events[0].total_activities == 1 and ds.events[0].assets_dispatched == 0


def test_missing_required_column():
    with pytest.raises(DataError, match="lat"):
        events_from_string("id,timestamp,lon\n")


def test_configured_time_range_and_duplicates():
    text = HEADER + "a,2010-04-07T15:02:00Z,1,1,1,0,,\nb,2012-01-01T00:00:00Z,1,1,1,0,,\nb,2012-01-01T00:00:00Z,1,1,1,0,,\n"
    ds, rejects = parse_events(io.StringIO(text), ParseConfig(max_reject_fraction=1.0, time_span=("2011-01", "2017-12")))
    assert ds.ids == ["b"]
    assert [r.reason for r in rejects] == ["timestamp outside configured range", "duplicate id b"]


def test_write_read_round_trip(rng):
    ds = random_dataset(rng, 30, groups=["a", "b"])
    buf = io.StringIO()
    write_events(ds, buf)
    back, rejects = events_from_string(buf.getvalue())
    assert not rejects
    assert [e.location for e in back] == [e.location for e in ds]
    assert [(e.id, e.total_activities, e.assets_dispatched, e.group) for e in back] == \
           [(e.id, e.total_activities, e.assets_dispatched, e.group) for e in ds]


def test_filter_categories():
    events = [make_event(i, 0, 170, category="medical_consultation" if i < 2 else "sar") for i in range(5)]
    ds = EventDataset.from_events(events)
    out = filter_events(ds, FilterRules(exclude_categories=("medical_consultation",)))
    assert len(out) == 3
    assert out.provenance["filter_removed"] == {"category": 2}


def test_filter_region_box():
    ds = EventDataset.from_events([make_event(0, 50, -140), make_event(1, 20, -140)])
    rules = FilterRules(region=(Box(-5, 45, 130, 250),), frame=LonFrame(0.0))
    assert filter_events(ds, rules).ids == ["e1"]


def test_filter_region_ground_truth(rng):
    inside = random_dataset(rng, 2629, lat=(-5, 45), lon=(130, 215))
    outside = random_dataset(rng, 400, lat=(46, 60), lon=(130, 215))
    events = list(inside) + [dataclasses.replace(e, id=f"o{i}") for i, e in enumerate(outside)]
    ds = EventDataset.from_events(events)
    out = filter_events(ds, FilterRules(region=(Box(-5, 45, 130, 215),)))
    assert len(out) == 2629
    assert set(out.ids) == set(inside.ids)


def test_filter_idempotent(rng):
    ds = random_dataset(rng, 200, lat=(-20, 60))
    rules = FilterRules(("nothing",), (Box(-5, 45, 130, 180), Box(0, 30, 180, 215)))
    once = filter_events(ds, rules)
    twice = filter_events(once, rules)
    assert once.ids == twice.ids


def test_filter_everything_warns():
    ds = EventDataset.from_events([make_event(0, 0, 0, category="x")])
    with pytest.warns(UserWarning):
        out = filter_events(ds, FilterRules(("x",)))
    assert len(out) == 0


def test_split_study_window():
    events = [make_event(i, 0, 170, when=f"{y}-{m:02d}-15T00:00:00") for i, (y, m) in
              enumerate((y, m) for y in range(2011, 2018) for m in (1, 6, 12))]
    ds = EventDataset.from_events(events)
    train, test = split_by_date(ds, "2016-01")
    assert {e.timestamp.year for e in train} == set(range(2011, 2016))
    assert {e.timestamp.year for e in test} == {2016, 2017}
    assert str(train.time_span[1]) == "2015-12" and str(test.time_span[0]) == "2016-01"


def test_split_empty_test_warns():
    ds = EventDataset([make_event(0, 0, 0, when="2011-03-01T00:00:00")], ("2011-01", "2011-12"))
    with pytest.warns(UserWarning, match="empty"):
        train, test = split_by_date(ds, "2011-06")
    assert len(train) == 1 and len(test) == 0


def test_split_random_is_exhaustive_and_ordered(rng):
    ds = random_dataset(rng, 500, months=40)
    cutoff = np.datetime64("2012-07", "M")
    train, test = split_by_date(ds, cutoff)
    assert len(train) + len(test) == len(ds)
    assert Counter(train.ids) + Counter(test.ids) == Counter(ds.ids)
    assert train.months.max() < cutoff <= test.months.min()


def test_split_cutoff_outside_span():
    ds = EventDataset([make_event(0, 0, 0)], ("2013-01", "2013-12"))
    with pytest.raises(ValueError):
        split_by_date(ds, "2015-01")


def _one_zone():
    return Partition((Zone(0, GeoPoint(0, 0), ClusterRule(), 0),), "zdm", LonFrame())


def test_monthly_counts_single_zone():
    ds = EventDataset([make_event(i, 0, 0, when=f"2013-04-0{i + 1}T00:00:00") for i in range(3)], ("2013-04", "2013-05"))
    s = monthly_counts(ds, _one_zone(), ("2013-04", "2013-05"))
    assert s.counts.tolist() == [[3, 0]]


def test_monthly_counts_empty():
    ds = EventDataset((), ("2013-01", "2013-06"))
    s = monthly_counts(ds, _one_zone())
    assert s.counts.shape == (1, 6) and not s.counts.any()


def test_monthly_counts_match_tally(rng):
    ds = random_dataset(rng, 200)
    p = weighted_kmeans(ds, 4, LonFrame(0.0), seed=3)
    months = month_range(*ds.time_span)
    s = monthly_counts(ds, p, months)
    tally = Counter((assign(p, e), str(e.month)) for e in ds)
    for z in range(4):
        for j, m in enumerate(months):
            assert s.counts[z, j] == tally.get((z, str(m)), 0)
    assert s.counts.sum() == len(ds)


def test_monthly_counts_outside_range():
    ds = EventDataset([make_event(7, 0, 0, when="2014-02-01T00:00:00")], ("2014-01", "2014-03"))
    with pytest.raises(DataError, match="e7"):
        monthly_counts(ds, _one_zone(), ("2014-01", "2014-01"))
