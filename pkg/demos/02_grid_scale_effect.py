"""
Scale effect on nested grids
============================

Quadrat grids of 1, 2, 8, 15, 43 and 91 cells over the Pacific box.  Each
cell's zone sits at the activity-weighted centroid of its training events.
Finer grids cut location error, with shrinking returns per added zone.
"""

from demandagg import (FilterRules, LonFrame, PACIFIC_REGION, build_from_spec, default_spec, distance_error,
                       filter_events, generate, split_by_date)

frame = LonFrame(0.0)
ds = generate(default_spec())
ds = filter_events(ds, FilterRules(("medical_consultation",), PACIFIC_REGION, frame))
train, test = split_by_date(ds, "2016-01")
print(f"{len(ds)} events after filtering; {len(train)} train, {len(test)} test")

prev = None
print(f"{'grid':>8} {'zones':>6} {'d_e (nmi)':>12} {'gain/zone':>10}")
for preset in ("grid1", "grid2", "grid8", "grid15", "grid43", "grid91"):
    p = build_from_spec({"kind": "grid", "preset": preset}, train, frame)
    d_e, _ = distance_error(p, test)
    gain = "" if prev is None else f"{(prev[1] - d_e) / (len(p) - prev[0]):10.0f}"
    print(f"{preset:>8} {len(p):6d} {d_e:12.0f} {gain:>10}")
    prev = (len(p), d_e)
