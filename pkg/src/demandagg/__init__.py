"""Spatiotemporal demand aggregation: zoning, demand models and aggregation error."""

from .data import (
    Box,
    DataError,
    DemandEvent,
    EventDataset,
    FilterRules,
    MonthlySeries,
    ParseConfig,
    filter_events,
    monthly_counts,
    parse_events,
    split_by_date,
)
from .demand import (
    DemandModel,
    Degenerate,
    GammaPoisson,
    Median,
    Poisson,
    SimulationResult,
    extreme_month_counts,
    fit_count_distribution,
    fit_median,
    fit_stochastic,
    predict_static,
    sample_month,
    simulate,
)
from .geo import EARTH_RADIUS_NM, GeoPoint, LonFrame, haversine_nm, make_frame, weighted_centroid
from .metrics import (
    ErrorReport,
    distance_error,
    error_report,
    signed_volume_series,
    volume_error,
    weighted_distance_error,
)
from .partition import (
    PACIFIC_REGION,
    Partition,
    Zone,
    assign,
    build_from_spec,
    build_grid,
    elbow_k,
    hierarchical_partition,
    refine_cells,
    rule_of_thumb_k,
    wcss_curve,
    weighted_kmeans,
)
from .synth import ClusterSpec, SynthSpec, default_spec, generate

__version__ = "0.1.0"
