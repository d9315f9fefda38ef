"""
Volume error under median demand models
=======================================

Each zone predicts its median monthly training count for every test month.
More zones means more, smaller, noisier cells, so the summed absolute
miss grows even as location error falls.  The signed series shows months
of under-prediction (positive) and over-prediction (negative).
"""

import numpy as np

from demandagg import (FilterRules, LonFrame, PACIFIC_REGION, build_from_spec, default_spec, error_report,
                       filter_events, fit_median, generate, monthly_counts, predict_static, split_by_date)

frame = LonFrame(0.0)
ds = filter_events(generate(default_spec()), FilterRules(("medical_consultation",), PACIFIC_REGION, frame))
train, test = split_by_date(ds, "2016-01")

for preset in ("grid1", "grid8", "grid43"):
    p = build_from_spec({"kind": "grid", "preset": preset}, train, frame)
    pred = predict_static(fit_median(monthly_counts(train, p)))
    rep = error_report(preset, p, test, pred, monthly_counts(test, p))
    signed = np.asarray(rep.signed_monthly)
    print(f"{preset:>7}: v_e = {rep.v_e:5.0f}, predicted {pred.sum():5.1f}/month, "
          f"signed range [{signed.min():+.1f}, {signed.max():+.1f}]")

# 1-zone month by month
p = build_from_spec({"kind": "grid", "preset": "grid1"}, train, frame)
rep = error_report("one", p, test, predict_static(fit_median(monthly_counts(train, p))), monthly_counts(test, p))
for m, s in zip(rep.months[:6], rep.signed_monthly[:6]):
    print(f"  {m}: {s:+.0f}")
