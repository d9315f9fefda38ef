"""
Great-circle distances and the longitude frame
==============================================

Distances are haversine great-circle lengths in nautical miles.  Anything
that averages longitudes (centroids, k-means) first unwraps them into a
frame so that a cloud straddling 180 degrees stays contiguous.
"""

import numpy as np

from demandagg import GeoPoint, LonFrame, haversine_nm, make_frame, weighted_centroid

honolulu = GeoPoint(21.3069, -157.8583)
guam = GeoPoint(13.4443, 144.7937)
print(f"Honolulu to Guam: {haversine_nm(honolulu, guam):.1f} nmi")
print(f"half the equator: {haversine_nm(GeoPoint(0, 0), GeoPoint(0, 180)):.3f} nmi")

# a naive mean of +179 and -179 lands on the prime meridian
pts = [GeoPoint(0, 179), GeoPoint(0, -179)]
print("naive mean lon:", np.mean([p.lon_deg for p in pts]))

# in an offset-0 frame longitudes live on [0, 360) and the mean is 180
print("frame centroid:", weighted_centroid(pts, [1, 1], LonFrame(0.0)))

# make_frame picks the offset giving the tightest span automatically
rng = np.random.default_rng(0)
lons = LonFrame().wrap(180 + rng.normal(0, 8, 500))
frame = make_frame(lons)
print(f"chosen offset {frame.offset_deg:.2f}, unwrapped span {np.ptp(frame.unwrap(lons)):.1f} deg "
      f"(raw span {np.ptp(lons):.1f} deg)")
