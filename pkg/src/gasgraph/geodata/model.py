"""Domain records for the layered gas/hydrogen network dataset.

Records are frozen dataclasses and collections are tuples, so a loaded
dataset can be shared freely; transformations build new datasets with
:func:`dataclasses.replace`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable

from ..errors import GeometryError, SchemaError, UnresolvedReferenceError
from .geometry import geodesic_length

LENGTH_RTOL = 1e-3

WGS84_CRS = frozenset(
    {
        "EPSG:4326",
        "OGC:CRS84",
        "WGS84",
        "urn:ogc:def:crs:OGC:1.3:CRS84",
        "urn:ogc:def:crs:EPSG::4326",
    }
)


class NodeKind(str, Enum):
    JUNCTION = "junction"
    BORDER_POINT = "border_point"
    STORAGE = "storage"
    COMPRESSOR = "compressor"
    DEMAND = "demand"
    ELECTROLYZER = "electrolyzer"
    BIOGAS_PLANT = "biogas_plant"
    POWER_PLANT = "power_plant"


class Carrier(str, Enum):
    NATURAL_GAS = "natural_gas"
    HYDROGEN = "hydrogen"
    TRANSITIONAL = "transitional"


class Category(str, Enum):
    TRANSMISSION = "transmission"
    DISTRIBUTION_L1 = "distribution_l1"
    DISTRIBUTION_L2 = "distribution_l2"


class Status(str, Enum):
    EXISTING = "existing"
    REPURPOSED = "repurposed"
    NEW_BUILD = "new_build"


class AttrSource(str, Enum):
    MATCHED = "matched"
    ASSUMED = "assumed"
    MANUAL = "manual"
    UNSET = "unset"


# technical attributes that the matcher and the defaults may fill
ATTRIBUTE_FIELDS = (
    "name",
    "diameter_min_mm",
    "diameter_max_mm",
    "pressure_min_bar",
    "pressure_max_bar",
)


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise GeometryError(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not -180.0 <= self.lon <= 180.0:
            raise GeometryError(f"longitude {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise GeometryError(f"latitude {self.lat} outside [-90, 90]")

    @property
    def coords(self) -> tuple[float, float]:
        return (self.lon, self.lat)


@dataclass(frozen=True)
class Polyline:
    points: tuple[GeoPoint, ...]

    def __post_init__(self):
        if len(self.points) < 2:
            raise GeometryError("polyline needs at least two points")
        for p, q in zip(self.points[:-1], self.points[1:]):
            if p == q:
                raise GeometryError(f"consecutive duplicate vertex ({p.lon}, {p.lat})")

    @classmethod
    def from_coords(cls, coords: Iterable[Iterable[float]]) -> Polyline:
        return cls(tuple(GeoPoint(float(c[0]), float(c[1])) for c in coords))

    @property
    def coords(self) -> list[tuple[float, float]]:
        return [p.coords for p in self.points]

    @property
    def start(self) -> GeoPoint:
        return self.points[0]

    @property
    def end(self) -> GeoPoint:
        return self.points[-1]

    def reversed(self) -> Polyline:
        return Polyline(tuple(reversed(self.points)))


@dataclass(frozen=True)
class NetworkNode:
    id: str
    location: GeoPoint
    kind: NodeKind = NodeKind.JUNCTION
    carrier: Carrier = Carrier.NATURAL_GAS
    nuts3: str | None = None


def _check_range(seg_id: str, lo_name: str, lo, hi_name: str, hi) -> None:
    for name, value in ((lo_name, lo), (hi_name, hi)):
        if value is not None and (not math.isfinite(value) or value < 0):
            raise SchemaError(f"must be a finite non-negative number, got {value}", seg_id, name)
    if lo is not None and hi is not None and lo > hi:
        raise SchemaError(f"{lo_name}={lo} exceeds {hi_name}={hi}", seg_id, lo_name)


@dataclass(frozen=True)
class PipelineSegment:
    """A pipeline edge.

    ``from_node``/``to_node`` may be ``None`` for raw, not yet snapped input.
    ``length_km`` is derived from the geometry when omitted; a supplied value
    must agree with the geodesic length within 0.1%. For repurposed segments
    ``carrier`` keeps the original natural-gas label; the carrier in effect at
    a given year comes from :func:`gasgraph.temporal.carrier_at`.
    """

    id: str
    geometry: Polyline
    category: Category
    from_node: str | None = None
    to_node: str | None = None
    carrier: Carrier = Carrier.NATURAL_GAS
    status: Status = Status.EXISTING
    diameter_min_mm: float | None = None
    diameter_max_mm: float | None = None
    pressure_min_bar: float | None = None
    pressure_max_bar: float | None = None
    repurpose_year: int | None = None
    commission_year: int | None = None
    length_km: float | None = None
    name: str | None = None
    attr_source: AttrSource = AttrSource.UNSET
    # attribute names last written by the matcher; lets re-runs replace them
    matched_fields: tuple[str, ...] = ()

    def __post_init__(self):
        sid = self.id
        if not sid:
            raise SchemaError("segment id must be non-empty", None, "id")
        if self.carrier is Carrier.TRANSITIONAL:
            raise SchemaError("segments are natural_gas or hydrogen", sid, "carrier")
        _check_range(sid, "diameter_min_mm", self.diameter_min_mm, "diameter_max_mm", self.diameter_max_mm)
        _check_range(sid, "pressure_min_bar", self.pressure_min_bar, "pressure_max_bar", self.pressure_max_bar)

        if self.status is Status.REPURPOSED:
            if self.repurpose_year is None:
                raise SchemaError("repurposed segment needs repurpose_year", sid, "repurpose_year")
            if self.carrier is not Carrier.NATURAL_GAS:
                raise SchemaError("repurposed segment keeps carrier natural_gas", sid, "carrier")
        elif self.repurpose_year is not None:
            raise SchemaError("repurpose_year only allowed with status repurposed", sid, "repurpose_year")
        if self.status is Status.NEW_BUILD:
            if self.commission_year is None:
                raise SchemaError("new_build segment needs commission_year", sid, "commission_year")
            if self.carrier is not Carrier.HYDROGEN:
                raise SchemaError("new_build segment must carry hydrogen", sid, "carrier")
        elif self.commission_year is not None:
            raise SchemaError("commission_year only allowed with status new_build", sid, "commission_year")

        unknown = set(self.matched_fields) - set(ATTRIBUTE_FIELDS)
        if unknown:
            raise SchemaError(f"unknown attribute names {sorted(unknown)}", sid, "matched_fields")

        computed = geodesic_length(self.geometry)
        if self.length_km is None:
            object.__setattr__(self, "length_km", computed)
        elif not math.isclose(self.length_km, computed, rel_tol=LENGTH_RTOL):
            raise SchemaError(
                f"length_km={self.length_km} differs from geodesic length {computed:.6f} by more than 0.1%",
                sid,
                "length_km",
            )

    @property
    def endpoints(self) -> tuple[str | None, str | None]:
        return (self.from_node, self.to_node)


@dataclass(frozen=True)
class ShortPipe:
    """Lossless, non-limiting connector active in ``[activate_year, deactivate_year)``."""

    id: str
    from_node: str
    to_node: str
    activate_year: int | None = None
    deactivate_year: int | None = None

    def __post_init__(self):
        if (
            self.activate_year is not None
            and self.deactivate_year is not None
            and self.activate_year >= self.deactivate_year
        ):
            raise SchemaError(
                f"activate_year {self.activate_year} must precede deactivate_year {self.deactivate_year}",
                self.id,
                "activate_year",
            )
        if self.from_node == self.to_node:
            raise SchemaError("short pipe endpoints must differ", self.id, "to_node")


@dataclass(frozen=True)
class FacilityPoint:
    id: str
    location: GeoPoint
    kind: NodeKind
    carrier: Carrier = Carrier.NATURAL_GAS
    attached_node: str | None = None

    def __post_init__(self):
        if self.kind is NodeKind.JUNCTION:
            raise SchemaError("facilities cannot be junctions", self.id, "kind")
        if self.carrier is Carrier.TRANSITIONAL:
            raise SchemaError("facility carrier must be natural_gas or hydrogen", self.id, "carrier")


@dataclass(frozen=True)
class DemandPoint:
    id: str
    location: GeoPoint
    nuts3: str
    annual_demand: float
    carrier: Carrier = Carrier.HYDROGEN
    attached_node: str | None = None

    def __post_init__(self):
        if not self.nuts3:
            raise SchemaError("nuts3 must be non-empty", self.id, "nuts3")
        if not math.isfinite(self.annual_demand) or self.annual_demand < 0:
            raise SchemaError(f"annual_demand must be >= 0, got {self.annual_demand}", self.id, "annual_demand")
        if self.carrier is Carrier.TRANSITIONAL:
            raise SchemaError("demand carrier must be natural_gas or hydrogen", self.id, "carrier")


@dataclass(frozen=True)
class Metadata:
    crs: str = "EPSG:4326"
    demand_unit: str = "GWh/year"
    horizon: tuple[int, ...] = ()
    exceptions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.crs not in WGS84_CRS:
            raise SchemaError(f"crs {self.crs!r} is not geographic WGS84; reprojection is not supported", None, "crs")
        object.__setattr__(self, "horizon", tuple(sorted(set(self.horizon))))


def _sorted_unique(items, layer: str) -> tuple:
    items = tuple(sorted(items, key=lambda r: r.id))
    for a, b in zip(items[:-1], items[1:]):
        if a.id == b.id:
            raise SchemaError(f"duplicate {layer} id", a.id, "id")
    return items


@dataclass(frozen=True)
class NetworkDataset:
    """All layers of one network plus metadata.

    Collections are kept sorted by id, which makes equality order-insensitive
    with respect to the input and serialisation deterministic.
    """

    nodes: tuple[NetworkNode, ...] = ()
    segments: tuple[PipelineSegment, ...] = ()
    short_pipes: tuple[ShortPipe, ...] = ()
    facilities: tuple[FacilityPoint, ...] = ()
    demand_points: tuple[DemandPoint, ...] = ()
    metadata: Metadata = field(default_factory=Metadata)

    def __post_init__(self):
        object.__setattr__(self, "nodes", _sorted_unique(self.nodes, "node"))
        object.__setattr__(self, "segments", _sorted_unique(self.segments, "segment"))
        object.__setattr__(self, "short_pipes", _sorted_unique(self.short_pipes, "short_pipe"))
        object.__setattr__(self, "facilities", _sorted_unique(self.facilities, "facility"))
        object.__setattr__(self, "demand_points", _sorted_unique(self.demand_points, "demand"))

        node_ids = {n.id for n in self.nodes}

        def check(owner: str, fld: str, ref: str | None) -> None:
            if ref is not None and ref not in node_ids:
                raise UnresolvedReferenceError(f"unknown node {ref!r}", owner, fld)

        for s in self.segments:
            check(s.id, "from_node", s.from_node)
            check(s.id, "to_node", s.to_node)
        for sp in self.short_pipes:
            check(sp.id, "from_node", sp.from_node)
            check(sp.id, "to_node", sp.to_node)
        for f in self.facilities:
            check(f.id, "attached_node", f.attached_node)
        for d in self.demand_points:
            check(d.id, "attached_node", d.attached_node)

    @cached_property
    def node_by_id(self) -> dict[str, NetworkNode]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def segment_by_id(self) -> dict[str, PipelineSegment]:
        return {s.id: s for s in self.segments}

    def is_empty(self) -> bool:
        return not (self.nodes or self.segments or self.short_pipes or self.facilities or self.demand_points)
