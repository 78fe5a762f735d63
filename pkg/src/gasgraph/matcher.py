"""Buffer-based conflation of pipeline segments against reference lines.

The target polyline is densified and each sample point is tested against
the candidate geometry; the overlap length is the in-buffer share of the
samples (each weighted by the resampled length it stands for) times the
target length. Among all candidates the one with the
largest overlap wins, ties going to the smaller mean distance and then the
smaller candidate id.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import GasGraphError, SchemaError
from .geodata.geometry import densify, geodesic_length, haversine_km_array, point_to_polyline_m
from .geodata.model import ATTRIBUTE_FIELDS, AttrSource, NetworkDataset, PipelineSegment, Polyline

log = logging.getLogger(__name__)

DEFAULT_BUFFER_M = 200.0
DEFAULT_STEP_M = 25.0

NUMERIC_FIELDS = ATTRIBUTE_FIELDS[1:]


@dataclass(frozen=True)
class ReferenceFeature:
    id: str
    geometry: Polyline
    attributes: Mapping[str, Any] = field(default_factory=dict)

    @property
    def coords(self) -> np.ndarray:
        return np.asarray(self.geometry.coords, dtype=float)


@dataclass(frozen=True)
class MatchCandidate:
    candidate_id: str
    overlap_length_km: float
    mean_distance_m: float
    attributes: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def sort_key(self) -> tuple[float, float, str]:
        return (-self.overlap_length_km, self.mean_distance_m, self.candidate_id)


@dataclass(frozen=True)
class MatchResult:
    target_id: str
    chosen: MatchCandidate | None
    all_candidates: tuple[MatchCandidate, ...]
    buffer_m: float
    copied_fields: tuple[str, ...] = ()


def _sample_weights(samples: np.ndarray) -> np.ndarray:
    # each sample stands for half of each adjacent interval
    gaps = haversine_km_array(samples[:-1], samples[1:])
    w = np.zeros(len(samples))
    w[:-1] += gaps / 2
    w[1:] += gaps / 2
    return w / w.sum()


def _overlap_stats(
    target: np.ndarray, length_km: float, candidate: np.ndarray, buffer_m: float, step_m: float
) -> tuple[float, float]:
    samples = densify(target, step_m)
    d = point_to_polyline_m(samples, candidate)
    inside = d <= buffer_m
    if not inside.any():
        return 0.0, math.inf
    w = _sample_weights(samples)
    share = float(w[inside].sum())
    return share * length_km, float(np.dot(w[inside], d[inside]) / share)


def overlap_length(target: Polyline, candidate: Polyline, buffer_m: float, step_m: float) -> float:
    """Kilometers of ``target`` lying within ``buffer_m`` of ``candidate``."""
    if buffer_m <= 0 or step_m <= 0:
        raise ValueError("buffer_m and step_m must be positive")
    t = np.asarray(target.coords, dtype=float)
    c = np.asarray(candidate.coords, dtype=float)
    return _overlap_stats(t, geodesic_length(target), c, buffer_m, step_m)[0]


def _bbox(coords: np.ndarray) -> np.ndarray:
    return np.concatenate([coords.min(axis=0), coords.max(axis=0)])


class ReferenceSet:
    """Reference features with a bounding-box prefilter."""

    def __init__(self, features: Iterable[ReferenceFeature]):
        self.features = sorted(features, key=lambda f: f.id)
        self._coords = [f.coords for f in self.features]
        self._boxes = np.array([_bbox(c) for c in self._coords]).reshape(-1, 4)

    def __len__(self) -> int:
        return len(self.features)

    def near(self, coords: np.ndarray, buffer_m: float) -> list[int]:
        if not self.features:
            return []
        box = _bbox(coords)
        pad_lat = buffer_m / 111_000.0
        coslat = math.cos(math.radians(min(89.0, max(abs(box[1]), abs(box[3])))))
        pad_lon = pad_lat / max(coslat, 1e-3)
        b = self._boxes
        hit = (
            (b[:, 0] <= box[2] + pad_lon)
            & (b[:, 2] >= box[0] - pad_lon)
            & (b[:, 1] <= box[3] + pad_lat)
            & (b[:, 3] >= box[1] - pad_lat)
        )
        return np.flatnonzero(hit).tolist()


def match_segment(
    target: PipelineSegment,
    reference: ReferenceSet | Sequence[ReferenceFeature],
    buffer_m: float = DEFAULT_BUFFER_M,
    step_m: float = DEFAULT_STEP_M,
) -> MatchResult:
    if buffer_m <= 0 or step_m <= 0:
        raise ValueError("buffer_m and step_m must be positive")
    if not isinstance(reference, ReferenceSet):
        reference = ReferenceSet(reference)
    t = np.asarray(target.geometry.coords, dtype=float)
    candidates = []
    for i in reference.near(t, buffer_m):
        ref = reference.features[i]
        overlap, mean_d = _overlap_stats(t, target.length_km, reference._coords[i], buffer_m, step_m)
        if overlap > 0:
            candidates.append(MatchCandidate(ref.id, overlap, mean_d, ref.attributes))
    candidates.sort(key=MatchCandidate.sort_key)
    return MatchResult(
        target_id=target.id,
        chosen=candidates[0] if candidates else None,
        all_candidates=tuple(candidates),
        buffer_m=buffer_m,
    )


def match_all(
    dataset: NetworkDataset,
    reference: ReferenceSet | Sequence[ReferenceFeature],
    buffer_m: float = DEFAULT_BUFFER_M,
    step_m: float = DEFAULT_STEP_M,
    segment_filter=None,
) -> list[MatchResult]:
    """Match every segment (optionally filtered); results ordered by target id."""
    if not isinstance(reference, ReferenceSet):
        reference = ReferenceSet(reference)
    return [
        match_segment(s, reference, buffer_m, step_m)
        for s in dataset.segments
        if segment_filter is None or segment_filter(s)
    ]


def assign_attributes(
    dataset: NetworkDataset, results: Iterable[MatchResult], fields: Sequence[str]
) -> NetworkDataset:
    return assign_attributes_with_report(dataset, results, fields)[0]


def assign_attributes_with_report(
    dataset: NetworkDataset, results: Iterable[MatchResult], fields: Sequence[str]
) -> tuple[NetworkDataset, list[MatchResult]]:
    """Copy ``fields`` from each chosen candidate onto its target segment.

    Unset fields are always filled. On segments previously enriched by the
    matcher, the fields it wrote (``matched_fields``) are replaced, so
    re-running against an updated reference refreshes them. Segments with
    ``attr_source == manual`` only ever get unset fields filled and keep
    their source label. Returns the new dataset and the results annotated
    with the fields actually copied.
    """
    bad = [f for f in fields if f not in ATTRIBUTE_FIELDS]
    if bad:
        raise ValueError(f"fields {bad} not in allowed set {list(ATTRIBUTE_FIELDS)}")
    by_id = dataset.segment_by_id
    updated: dict[str, PipelineSegment] = {}
    annotated = []
    for res in results:
        seg = by_id.get(res.target_id)
        if seg is None:
            raise GasGraphError(f"match result for unknown segment {res.target_id!r}")
        if res.chosen is None:
            annotated.append(res)
            continue
        attrs = res.chosen.attributes
        manual = seg.attr_source is AttrSource.MANUAL
        replaceable = set() if manual else set(seg.matched_fields)
        changes: dict[str, Any] = {}
        for f in fields:
            value = attrs.get(f)
            if value is None:
                continue
            if getattr(seg, f) is None or f in replaceable:
                changes[f] = value
        # drop range halves that would invert a (min, max) pair
        for lo, hi in (("diameter_min_mm", "diameter_max_mm"), ("pressure_min_bar", "pressure_max_bar")):
            new_lo = changes.get(lo, getattr(seg, lo))
            new_hi = changes.get(hi, getattr(seg, hi))
            if new_lo is not None and new_hi is not None and new_lo > new_hi:
                log.warning("segment %s: match for %s/%s would invert the range; skipped", seg.id, lo, hi)
                changes.pop(lo, None)
                changes.pop(hi, None)
        copied = tuple(sorted(changes))
        if not manual:
            changes["attr_source"] = AttrSource.MATCHED
            changes["matched_fields"] = tuple(sorted(set(seg.matched_fields) | set(copied)))
        if changes:
            new = replace(seg, **changes)
            if new != seg:
                updated[seg.id] = new
        annotated.append(replace(res, copied_fields=copied))
    if not updated:
        return dataset, annotated
    segments = tuple(updated.get(s.id, s) for s in dataset.segments)
    return replace(dataset, segments=segments), annotated


def read_field_map(path: str | os.PathLike) -> list[tuple[str, str]]:
    """Parse ``source_property target_field`` lines (``#`` comments allowed)."""
    mapping = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SchemaError(f"{path}:{lineno}: expected 'source_property target_field'")
        if parts[1] not in ATTRIBUTE_FIELDS:
            raise SchemaError(f"{path}:{lineno}: target field {parts[1]!r} not in {list(ATTRIBUTE_FIELDS)}")
        mapping.append((parts[0], parts[1]))
    return mapping


def _coerce(target_field: str, value: Any, fid: str) -> Any:
    if value is None or value == "":
        return None
    if target_field == "name":
        return str(value)
    try:
        number = float(value)
    except (TypeError, ValueError):
        log.warning("reference %s: %s value %r is not numeric; ignored", fid, target_field, value)
        return None
    return number if math.isfinite(number) and number >= 0 else None


def reference_from_geojson(obj: Any, field_map: Sequence[tuple[str, str]] | None = None) -> list[ReferenceFeature]:
    """Turn a FeatureCollection of (Multi)LineStrings into reference features.

    Without a field map, properties named like the target fields are taken
    as-is. MultiLineString parts become separate features ``<id>#<k>``.
    """
    if not isinstance(obj, dict) or obj.get("type") != "FeatureCollection":
        raise SchemaError("reference must be a GeoJSON FeatureCollection")
    mapping = list(field_map) if field_map is not None else [(f, f) for f in ATTRIBUTE_FIELDS]
    out = []
    for i, feat in enumerate(obj.get("features") or []):
        props = feat.get("properties") or {}
        fid = str(props.get("id", feat.get("id", f"ref{i:05d}")))
        attrs: dict[str, Any] = {}
        for src, dst in mapping:
            value = _coerce(dst, props.get(src), fid)
            if value is not None:
                attrs[dst] = value
        geom = feat.get("geometry") or {}
        if geom.get("type") == "LineString":
            parts = [geom["coordinates"]]
        elif geom.get("type") == "MultiLineString":
            parts = geom["coordinates"]
        else:
            log.warning("reference %s: geometry %s skipped", fid, geom.get("type"))
            continue
        for k, coords in enumerate(parts):
            # drop repeated vertices, common in OSM exports
            clean = [c[:2] for j, c in enumerate(coords) if j == 0 or c[:2] != coords[j - 1][:2]]
            if len(clean) < 2:
                continue
            pid = fid if len(parts) == 1 else f"{fid}#{k}"
            out.append(ReferenceFeature(pid, Polyline.from_coords(clean), attrs))
    return out


def load_reference(path: str | os.PathLike, field_map: Sequence[tuple[str, str]] | None = None) -> ReferenceSet:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GasGraphError(f"cannot read reference {path}: {exc}") from None
    return ReferenceSet(reference_from_geojson(obj, field_map))
