"""Layered GeoJSON reading and writing.

One FeatureCollection holds every layer; ``properties.layer`` tells them
apart and a top-level ``metadata`` member carries dataset metadata. Output
is canonical (fixed feature order, fixed key order, one feature per line),
so saving the same dataset twice produces identical bytes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import fields
from enum import Enum
from pathlib import Path
from typing import Any

from ..errors import GasGraphError, GeometryError, SchemaError
from .model import (
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

LAYERS = ("node", "segment", "short_pipe", "facility", "demand")

_NODE_PROPS = {"id", "kind", "carrier", "nuts3"}
_SEGMENT_PROPS = {f.name for f in fields(PipelineSegment)} - {"geometry"}
_SHORT_PIPE_PROPS = {f.name for f in fields(ShortPipe)}
_FACILITY_PROPS = {"id", "kind", "carrier", "attached_node"}
_DEMAND_PROPS = {"id", "nuts3", "annual_demand", "carrier", "attached_node"}


class _Props:
    """Typed accessors over one feature's properties that name the offending field."""

    def __init__(self, fid: str | None, props: dict[str, Any], allowed: set[str]):
        self.fid = fid
        self.props = props
        unknown = set(props) - allowed - {"layer"}
        if unknown:
            raise SchemaError(f"unknown properties {sorted(unknown)}", fid, sorted(unknown)[0])

    def str(self, name: str, required: bool = False) -> str | None:
        v = self.props.get(name)
        if v is None:
            if required:
                raise SchemaError("missing required property", self.fid, name)
            return None
        if not isinstance(v, str):
            raise SchemaError(f"expected string, got {v!r}", self.fid, name)
        return v

    def num(self, name: str, required: bool = False) -> float | None:
        v = self.props.get(name)
        if v is None:
            if required:
                raise SchemaError("missing required property", self.fid, name)
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise SchemaError(f"expected finite number, got {v!r}", self.fid, name)
        return float(v)

    def year(self, name: str) -> int | None:
        v = self.props.get(name)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            if isinstance(v, float) and v.is_integer():
                return int(v)
            raise SchemaError(f"expected integer year, got {v!r}", self.fid, name)
        return v

    def enum(self, name: str, enum_cls: type[Enum], default=None):
        v = self.props.get(name)
        if v is None:
            if default is None:
                raise SchemaError("missing required property", self.fid, name)
            return default
        try:
            return enum_cls(v)
        except ValueError:
            allowed = ", ".join(e.value for e in enum_cls)
            raise SchemaError(f"{v!r} not one of {allowed}", self.fid, name) from None


def _point(fid: str | None, geom: Any) -> GeoPoint:
    if not isinstance(geom, dict) or geom.get("type") != "Point":
        raise GeometryError("expected Point geometry", fid, "geometry")
    coords = geom.get("coordinates")
    if not isinstance(coords, (list, tuple)) or len(coords) < 2:
        raise GeometryError("Point needs [lon, lat]", fid, "geometry")
    try:
        return GeoPoint(float(coords[0]), float(coords[1]))
    except (TypeError, ValueError) as exc:
        raise GeometryError(str(exc), fid, "geometry") from None


def _line(fid: str | None, geom: Any) -> Polyline:
    if not isinstance(geom, dict) or geom.get("type") != "LineString":
        raise GeometryError("expected LineString geometry", fid, "geometry")
    coords = geom.get("coordinates")
    if not isinstance(coords, (list, tuple)) or any(
        not isinstance(c, (list, tuple)) or len(c) < 2 for c in coords
    ):
        raise GeometryError("LineString needs a list of [lon, lat] positions", fid, "geometry")
    try:
        return Polyline.from_coords(coords)
    except GeometryError as exc:
        raise GeometryError(str(exc), fid, "geometry") from None
    except (TypeError, ValueError) as exc:
        raise GeometryError(str(exc), fid, "geometry") from None


def _rewrap(exc: SchemaError, fid: str | None) -> SchemaError:
    # record constructors raise without the feature id when it is the id itself that is bad
    if exc.feature_id is None and fid is not None:
        return type(exc)(str(exc), fid, exc.field)
    return exc


def segment_from_feature(feature: dict[str, Any]) -> PipelineSegment:
    props = feature.get("properties") or {}
    fid = props.get("id", feature.get("id"))
    p = _Props(fid, props, _SEGMENT_PROPS)
    geometry = _line(fid, feature.get("geometry"))
    try:
        return PipelineSegment(
            id=p.str("id", required=True) if "id" in props else _require_id(fid),
            geometry=geometry,
            category=p.enum("category", Category),
            from_node=p.str("from_node"),
            to_node=p.str("to_node"),
            carrier=p.enum("carrier", Carrier, Carrier.NATURAL_GAS),
            status=p.enum("status", Status, Status.EXISTING),
            diameter_min_mm=p.num("diameter_min_mm"),
            diameter_max_mm=p.num("diameter_max_mm"),
            pressure_min_bar=p.num("pressure_min_bar"),
            pressure_max_bar=p.num("pressure_max_bar"),
            repurpose_year=p.year("repurpose_year"),
            commission_year=p.year("commission_year"),
            length_km=p.num("length_km"),
            name=p.str("name"),
            attr_source=p.enum("attr_source", AttrSource, AttrSource.UNSET),
            matched_fields=tuple(props.get("matched_fields") or ()),
        )
    except SchemaError as exc:
        raise _rewrap(exc, fid) from None


def _require_id(fid: Any) -> str:
    if not isinstance(fid, str) or not fid:
        raise SchemaError("feature has no string id", None, "id")
    return fid


def _parse_feature(feature: Any, index: int):
    if not isinstance(feature, dict) or feature.get("type") != "Feature":
        raise SchemaError(f"features[{index}] is not a GeoJSON Feature", None, "type")
    props = feature.get("properties") or {}
    if not isinstance(props, dict):
        raise SchemaError(f"features[{index}] properties must be an object", None, "properties")
    fid = props.get("id", feature.get("id"))
    layer = props.get("layer")
    if layer not in LAYERS:
        raise SchemaError(f"layer {layer!r} not one of {', '.join(LAYERS)}", fid, "layer")
    if layer == "segment":
        return layer, segment_from_feature(feature)

    fid = _require_id(fid)
    geom = feature.get("geometry")
    try:
        if layer == "node":
            p = _Props(fid, props, _NODE_PROPS)
            return layer, NetworkNode(
                id=fid,
                location=_point(fid, geom),
                kind=p.enum("kind", NodeKind, NodeKind.JUNCTION),
                carrier=p.enum("carrier", Carrier, Carrier.NATURAL_GAS),
                nuts3=p.str("nuts3"),
            )
        if layer == "short_pipe":
            p = _Props(fid, props, _SHORT_PIPE_PROPS)
            if geom is not None and (not isinstance(geom, dict) or geom.get("type") != "Point"):
                raise GeometryError("short pipes are Point features", fid, "geometry")
            return layer, ShortPipe(
                id=fid,
                from_node=p.str("from_node", required=True),
                to_node=p.str("to_node", required=True),
                activate_year=p.year("activate_year"),
                deactivate_year=p.year("deactivate_year"),
            )
        if layer == "facility":
            p = _Props(fid, props, _FACILITY_PROPS)
            return layer, FacilityPoint(
                id=fid,
                location=_point(fid, geom),
                kind=p.enum("kind", NodeKind),
                carrier=p.enum("carrier", Carrier, Carrier.NATURAL_GAS),
                attached_node=p.str("attached_node"),
            )
        p = _Props(fid, props, _DEMAND_PROPS)
        return layer, DemandPoint(
            id=fid,
            location=_point(fid, geom),
            nuts3=p.str("nuts3", required=True),
            annual_demand=p.num("annual_demand", required=True),
            carrier=p.enum("carrier", Carrier, Carrier.HYDROGEN),
            attached_node=p.str("attached_node"),
        )
    except SchemaError as exc:
        raise _rewrap(exc, fid) from None


def _metadata(raw: Any) -> Metadata:
    if raw is None:
        return Metadata()
    if not isinstance(raw, dict):
        raise SchemaError("metadata must be an object", None, "metadata")
    unknown = set(raw) - {"crs", "demand_unit", "horizon", "exceptions"}
    if unknown:
        raise SchemaError(f"unknown metadata keys {sorted(unknown)}", None, "metadata")
    horizon = raw.get("horizon") or []
    if not all(isinstance(y, int) and not isinstance(y, bool) for y in horizon):
        raise SchemaError("horizon must be a list of integer years", None, "horizon")
    exceptions = raw.get("exceptions") or []
    if not all(isinstance(e, str) for e in exceptions):
        raise SchemaError("exceptions must be a list of strings", None, "exceptions")
    return Metadata(
        crs=raw.get("crs", "EPSG:4326"),
        demand_unit=raw.get("demand_unit", "GWh/year"),
        horizon=tuple(horizon),
        exceptions=tuple(exceptions),
    )


def dataset_from_geojson(obj: Any) -> NetworkDataset:
    if not isinstance(obj, dict) or obj.get("type") != "FeatureCollection":
        raise SchemaError("top level must be a GeoJSON FeatureCollection", None, "type")
    features = obj.get("features")
    if not isinstance(features, list):
        raise SchemaError("FeatureCollection needs a features list", None, "features")
    layers: dict[str, list] = {name: [] for name in LAYERS}
    for i, feature in enumerate(features):
        layer, record = _parse_feature(feature, i)
        layers[layer].append(record)
    return NetworkDataset(
        nodes=tuple(layers["node"]),
        segments=tuple(layers["segment"]),
        short_pipes=tuple(layers["short_pipe"]),
        facilities=tuple(layers["facility"]),
        demand_points=tuple(layers["demand"]),
        metadata=_metadata(obj.get("metadata")),
    )


def load_dataset(path: str | os.PathLike) -> NetworkDataset:
    """Read a layered GeoJSON dataset and check all invariants."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise GasGraphError(f"cannot read {path}: {exc}") from None
    return dataset_from_geojson(obj)


def _value(v: Any) -> Any:
    if isinstance(v, Enum):
        return v.value
    if isinstance(v, tuple):
        return list(v)
    return v


def _props(layer: str, pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    out: dict[str, Any] = {"layer": layer}
    for k, v in pairs:
        if v is None or v == ():
            continue
        out[k] = _value(v)
    return out


def _point_geom(p: GeoPoint) -> dict[str, Any]:
    return {"type": "Point", "coordinates": [p.lon, p.lat]}


def segment_to_feature(s: PipelineSegment) -> dict[str, Any]:
    pairs = [(f.name, getattr(s, f.name)) for f in fields(PipelineSegment) if f.name != "geometry"]
    return {
        "type": "Feature",
        "geometry": {"type": "LineString", "coordinates": [[p.lon, p.lat] for p in s.geometry.points]},
        "properties": _props("segment", pairs),
    }


def dataset_to_geojson(ds: NetworkDataset) -> dict[str, Any]:
    features: list[dict[str, Any]] = []
    for n in ds.nodes:
        features.append(
            {
                "type": "Feature",
                "geometry": _point_geom(n.location),
                "properties": _props("node", [("id", n.id), ("kind", n.kind), ("carrier", n.carrier), ("nuts3", n.nuts3)]),
            }
        )
    features.extend(segment_to_feature(s) for s in ds.segments)
    for sp in ds.short_pipes:
        pairs = [(f.name, getattr(sp, f.name)) for f in fields(ShortPipe)]
        # short pipes have no geometry of their own; the point marks the from-node
        geom = _point_geom(ds.node_by_id[sp.from_node].location)
        features.append({"type": "Feature", "geometry": geom, "properties": _props("short_pipe", pairs)})
    for f in ds.facilities:
        pairs = [("id", f.id), ("kind", f.kind), ("carrier", f.carrier), ("attached_node", f.attached_node)]
        features.append({"type": "Feature", "geometry": _point_geom(f.location), "properties": _props("facility", pairs)})
    for d in ds.demand_points:
        pairs = [
            ("id", d.id),
            ("nuts3", d.nuts3),
            ("annual_demand", d.annual_demand),
            ("carrier", d.carrier),
            ("attached_node", d.attached_node),
        ]
        features.append({"type": "Feature", "geometry": _point_geom(d.location), "properties": _props("demand", pairs)})
    m = ds.metadata
    return {
        "type": "FeatureCollection",
        "metadata": {
            "crs": m.crs,
            "demand_unit": m.demand_unit,
            "horizon": list(m.horizon),
            "exceptions": list(m.exceptions),
        },
        "features": features,
    }


def dumps_feature_collection(obj: dict[str, Any]) -> str:
    """Serialise a FeatureCollection with one feature per line."""
    head = {k: v for k, v in obj.items() if k != "features"}
    head_txt = json.dumps(head, separators=(",", ":"), ensure_ascii=False)
    lines = [json.dumps(f, separators=(",", ":"), ensure_ascii=False) for f in obj.get("features", [])]
    body = ",\n".join(lines)
    return head_txt[:-1] + ',"features":[\n' + body + ("\n" if lines else "") + "]}\n"


def save_dataset(ds: NetworkDataset, path: str | os.PathLike) -> Path:
    path = Path(path)
    text = dumps_feature_collection(dataset_to_geojson(ds))
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as exc:
        raise GasGraphError(f"cannot write {path}: {exc}") from None
    return path
