"""
Zone design with weighted k-means
=================================

Instead of a fixed grid, place zones where demand is.  ``weighted_kmeans``
clusters training events (weighted by total activities) and the rule of
thumb k = sqrt(n/2) sets the count.  The hierarchical variant clusters each
responder group separately, choosing k per group at the WCSS elbow.
"""

from demandagg import (FilterRules, LonFrame, PACIFIC_REGION, build_from_spec, default_spec, distance_error,
                       filter_events, generate, hierarchical_partition, rule_of_thumb_k, split_by_date,
                       weighted_kmeans, wcss_curve)

frame = LonFrame(0.0)
ds = filter_events(generate(default_spec()), FilterRules(("medical_consultation",), PACIFIC_REGION, frame))
train, test = split_by_date(ds, "2016-01")

k = rule_of_thumb_k(len(train))
zdm = weighted_kmeans(train, k, frame, seed=11)
grid43 = build_from_spec({"kind": "grid", "preset": "grid43"}, train, frame)
print(f"k-means, k={k}: d_e = {distance_error(zdm, test)[0]:.0f} nmi "
      f"({zdm.info['n_iter']} Lloyd steps, converged={zdm.info['converged']})")
print(f"43-cell grid:    d_e = {distance_error(grid43, test)[0]:.0f} nmi")

# the objective never rises between Lloyd steps
trace = zdm.info["trace"]
print("objective trace (first 5):", [round(t) for t in trace[:5]])

# per-group clustering: each group gets its own elbow
sz = hierarchical_partition(train, "group", "elbow", frame, seed=12)
print("per-group k:", sz.info["per_group_k"], f"-> {len(sz)} zones, d_e = {distance_error(sz, test)[0]:.0f} nmi")

guam_cutter = train.replace([e for e in train if e.group == "guam_cutter"])
print("guam_cutter WCSS for k=1..8:", [round(w) for w in wcss_curve(guam_cutter, range(1, 9), frame, seed=3)])
