"""Delimited-text and GeoJSON exports for optimisation models."""

from __future__ import annotations

import csv
import logging
import math
import os
from collections import defaultdict
from pathlib import Path
from typing import Any, Iterable

from .errors import GasGraphError
from .geodata.io import dumps_feature_collection
from .geodata.model import NetworkDataset
from .temporal import TimestepView, ValidationReport, topology_at, validate_years

log = logging.getLogger(__name__)

NODE_COLUMNS = ("id", "lon", "lat", "carrier", "kind", "nuts3", "demand")
EDGE_COLUMNS = (
    "id",
    "from",
    "to",
    "carrier",
    "length_km",
    "diameter_min_mm",
    "diameter_max_mm",
    "pressure_min_bar",
    "pressure_max_bar",
    "is_short_pipe",
)
COMBINED_COLUMNS = (
    "id",
    "from",
    "to",
    "is_short_pipe",
    "carrier",
    "status",
    "category",
    "length_km",
    "diameter_min_mm",
    "diameter_max_mm",
    "pressure_min_bar",
    "pressure_max_bar",
    "repurpose_year",
    "commission_year",
    "activate_year",
    "deactivate_year",
)


class ExportValidationError(GasGraphError):
    def __init__(self, report: ValidationReport):
        self.report = report
        years = ", ".join(map(str, report.failing_years()))
        super().__init__(f"dataset fails validation in year(s) {years}; use --force to export anyway")


def node_rows(dataset: NetworkDataset, view: TimestepView) -> list[dict[str, Any]]:
    """Nodes with their carrier in effect; demand attached to a node counts
    only while the node carries the demand's carrier, other demand points
    are listed as rows of their own."""
    attached = defaultdict(list)
    loose = []
    for d in dataset.demand_points:
        if d.attached_node is not None and view.node_carrier[d.attached_node] is d.carrier:
            attached[d.attached_node].append(d.annual_demand)
        else:
            loose.append(d)
    rows = []
    for n in dataset.nodes:
        rows.append(
            {
                "id": n.id,
                "lon": n.location.lon,
                "lat": n.location.lat,
                "carrier": view.node_carrier[n.id].value,
                "kind": n.kind.value,
                "nuts3": n.nuts3,
                "demand": math.fsum(attached[n.id]) if n.id in attached else None,
            }
        )
    for d in loose:
        rows.append(
            {
                "id": d.id,
                "lon": d.location.lon,
                "lat": d.location.lat,
                "carrier": d.carrier.value,
                "kind": "demand",
                "nuts3": d.nuts3,
                "demand": d.annual_demand,
            }
        )
    return rows


def edge_rows(dataset: NetworkDataset, view: TimestepView) -> list[dict[str, Any]]:
    rows = []
    by_id = dataset.segment_by_id
    for sid in sorted(view.active_segments):
        s = by_id[sid]
        rows.append(
            {
                "id": s.id,
                "from": s.from_node,
                "to": s.to_node,
                "carrier": view.active_segments[sid].value,
                "length_km": s.length_km,
                "diameter_min_mm": s.diameter_min_mm,
                "diameter_max_mm": s.diameter_max_mm,
                "pressure_min_bar": s.pressure_min_bar,
                "pressure_max_bar": s.pressure_max_bar,
                "is_short_pipe": False,
            }
        )
    pipes = {sp.id: sp for sp in dataset.short_pipes}
    for pid in sorted(view.active_short_pipes):
        sp = pipes[pid]
        rows.append(
            {
                "id": sp.id,
                "from": sp.from_node,
                "to": sp.to_node,
                "carrier": view.node_carrier[sp.from_node].value,
                "is_short_pipe": True,
            }
        )
    return rows


def combined_edge_rows(dataset: NetworkDataset) -> list[dict[str, Any]]:
    rows = []
    for s in dataset.segments:
        rows.append(
            {
                "id": s.id,
                "from": s.from_node,
                "to": s.to_node,
                "is_short_pipe": False,
                "carrier": s.carrier.value,
                "status": s.status.value,
                "category": s.category.value,
                "length_km": s.length_km,
                "diameter_min_mm": s.diameter_min_mm,
                "diameter_max_mm": s.diameter_max_mm,
                "pressure_min_bar": s.pressure_min_bar,
                "pressure_max_bar": s.pressure_max_bar,
                "repurpose_year": s.repurpose_year,
                "commission_year": s.commission_year,
            }
        )
    for sp in dataset.short_pipes:
        rows.append(
            {
                "id": sp.id,
                "from": sp.from_node,
                "to": sp.to_node,
                "is_short_pipe": True,
                "activate_year": sp.activate_year,
                "deactivate_year": sp.deactivate_year,
            }
        )
    return rows


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_table(path: str | os.PathLike, columns: Iterable[str], rows: Iterable[dict[str, Any]]) -> Path:
    path = Path(path)
    columns = list(columns)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])
    return path


def read_table(path: str | os.PathLike) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def view_to_geojson(dataset: NetworkDataset, view: TimestepView) -> dict[str, Any]:
    nodes = dataset.node_by_id
    features = []
    for row in node_rows(dataset, view):
        props = {k: v for k, v in row.items() if k not in ("lon", "lat") and v is not None}
        features.append(
            {"type": "Feature", "geometry": {"type": "Point", "coordinates": [row["lon"], row["lat"]]}, "properties": props}
        )
    by_id = dataset.segment_by_id
    for row in edge_rows(dataset, view):
        if row["is_short_pipe"]:
            coords = [list(nodes[row["from"]].location.coords), list(nodes[row["to"]].location.coords)]
        else:
            coords = [list(c) for c in by_id[row["id"]].geometry.coords]
        props = {k: v for k, v in row.items() if v is not None}
        features.append({"type": "Feature", "geometry": {"type": "LineString", "coordinates": coords}, "properties": props})
    return {"type": "FeatureCollection", "year": view.year, "features": features}


def export_dataset(
    dataset: NetworkDataset,
    years: Iterable[int],
    out_dir: str | os.PathLike,
    fmt: str = "csv",
    force: bool = False,
    exceptions: Iterable[str] | None = None,
) -> list[Path]:
    """Write per-year node/edge tables (or GeoJSON) plus a combined edge table."""
    if fmt not in ("csv", "geojson"):
        raise ValueError(f"unknown export format {fmt!r}")
    years = sorted(set(years))
    report = validate_years(dataset, years, exceptions)
    if not report.ok:
        if not force:
            raise ExportValidationError(report)
        log.warning("exporting despite validation failures in year(s) %s", report.failing_years())

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for y in years:
        view = topology_at(dataset, y)
        if fmt == "csv":
            written.append(write_table(out / f"nodes_{y}.csv", NODE_COLUMNS, node_rows(dataset, view)))
            written.append(write_table(out / f"edges_{y}.csv", EDGE_COLUMNS, edge_rows(dataset, view)))
        else:
            path = out / f"network_{y}.geojson"
            path.write_text(dumps_feature_collection(view_to_geojson(dataset, view)), encoding="utf-8")
            written.append(path)
    written.append(write_table(out / "edges_all.csv", COMBINED_COLUMNS, combined_edge_rows(dataset)))
    return written
