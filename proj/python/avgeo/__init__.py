"""Audio-visual geolocation primitives: sphere geometry, cells, atoms, flows, rewards, metrics."""

from ._avgeo import (
    EARTH_RADIUS_KM,
    Dictionary,
    FlowModel,
    Gazetteer,
    IntegrationError,
    InvalidInput,
    SingularityError,
    cell_token,
    evaluate,
    exp_map,
    from_unit,
    geodesic_distance_km,
    geodesic_interpolate,
    group_advantages,
    log_map,
    prd_metrics,
    r_geo,
    to_unit,
)

__all__ = [
    "EARTH_RADIUS_KM",
    "Dictionary",
    "FlowModel",
    "Gazetteer",
    "IntegrationError",
    "InvalidInput",
    "SingularityError",
    "cell_token",
    "evaluate",
    "exp_map",
    "from_unit",
    "geodesic_distance_km",
    "geodesic_interpolate",
    "group_advantages",
    "log_map",
    "prd_metrics",
    "r_geo",
    "to_unit",
]
