"""Domain model, layered GeoJSON I/O and geodesic primitives."""

from .geometry import EARTH_RADIUS_KM, distance_m, geodesic_length, haversine_km
from .io import load_dataset, save_dataset
from .model import (
    ATTRIBUTE_FIELDS,
    AttrSource,
    Carrier,
    Category,
    DemandPoint,
    FacilityPoint,
    GeoPoint,
    Metadata,
    NetworkDataset,
    NetworkNode,
    NodeKind,
    PipelineSegment,
    Polyline,
    ShortPipe,
    Status,
)

__all__ = [
    "ATTRIBUTE_FIELDS",
    "AttrSource",
    "Carrier",
    "Category",
    "DemandPoint",
    "EARTH_RADIUS_KM",
    "FacilityPoint",
    "GeoPoint",
    "Metadata",
    "NetworkDataset",
    "NetworkNode",
    "NodeKind",
    "PipelineSegment",
    "Polyline",
    "ShortPipe",
    "Status",
    "distance_m",
    "geodesic_length",
    "haversine_km",
    "load_dataset",
    "save_dataset",
]
