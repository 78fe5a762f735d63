"""Command-line workflow: ingest, georef, match, defaults, transition,
validate, stats, export, and ``pipeline`` chaining them all.

Each stage reads a dataset file and writes one, so runs can be resumed
from any stage. Every option can also be set through an environment
variable ``GASGRAPH_<OPTION>`` (upper case, dashes as underscores).

Exit codes: 0 ok, 1 usage, 2 data error, 3 validation failure.
"""

from __future__ import annotations

import json
import logging
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import __version__
from .defaults import DEFAULT_TABLE, apply_distribution_defaults, read_default_table
from .errors import GasGraphError, SchemaError
from .export import ExportValidationError, export_dataset
from .geodata.io import load_dataset, save_dataset, segment_from_feature
from .geodata.model import NetworkDataset
from .georef import apply_transform, estimate_affine, read_control_points
from .matcher import (
    DEFAULT_BUFFER_M,
    DEFAULT_STEP_M,
    assign_attributes_with_report,
    load_reference,
    match_all,
    read_field_map,
)
from .stats import compute_stats
from .temporal import ValidationReport, validate_years
from .topology import DEFAULT_SNAP_TOLERANCE_M, build_graph, snap_and_build
from .transition import apply_transition, load_demand_specs, load_plan

log = logging.getLogger("gasgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VALIDATION = 0, 1, 2, 3

STAGES = ("ingest", "georef", "build", "match", "defaults", "transition", "validate", "export")
DEFAULT_FIELDS = "name,diameter_min_mm,diameter_max_mm,pressure_min_bar,pressure_max_bar"


class ValidationFailed(Exception):
    def __init__(self, report: ValidationReport):
        self.report = report
        super().__init__(f"validation failed in year(s) {', '.join(map(str, report.failing_years()))}")


class StageError(Exception):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage} failed: {cause}")


def _env(name: str) -> str:
    return "GASGRAPH_" + name.upper().replace("-", "_")


def opt(*decls, **kwargs):
    long = next(d for d in decls if d.startswith("--"))
    kwargs.setdefault("envvar", _env(long[2:]))
    kwargs.setdefault("show_envvar", True)
    return click.option(*decls, **kwargs)


def parse_years(text: str | None) -> list[int] | None:
    """``"2027,2030"`` or ``"2026-2028,2040"`` -> sorted unique years."""
    if text is None or not text.strip():
        return None
    years = set()
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        try:
            if "-" in part[1:]:
                lo, hi = part.split("-", 1)
                years.update(range(int(lo), int(hi) + 1))
            else:
                years.add(int(part))
        except ValueError:
            raise click.BadParameter(f"invalid year list entry {part!r}") from None
    return sorted(years)


def read_exceptions(path: str | Path | None) -> list[str]:
    if path is None:
        return []
    out = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.split("#", 1)[0].strip()
        out.extend(t for t in line.replace(",", " ").split() if t)
    return out


# ----------------------------------------------------------------- stages


def stage_ingest(input_path, snap_tol_m: float) -> NetworkDataset:
    ds = load_dataset(input_path)
    return snap_and_build(ds, snap_tol_m)[0]


def stage_georef(ds: NetworkDataset, control_points, trace, snap_tol_m: float) -> NetworkDataset:
    pairs = read_control_points(control_points)
    transform, residuals = estimate_affine(pairs)
    for line in residuals.lines():
        log.info("georef residual %s", line)
    try:
        obj = json.loads(Path(trace).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GasGraphError(f"cannot read trace {trace}: {exc}") from None
    segments = []
    for i, feat in enumerate(obj.get("features") or []):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "LineString":
            raise SchemaError(f"trace feature {i} must be a LineString in pixel coordinates")
        line = apply_transform(transform, geom["coordinates"])
        geo_feat = {
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [list(c) for c in line.coords]},
            "properties": {k: v for k, v in (feat.get("properties") or {}).items() if k != "length_km"},
        }
        segments.append(segment_from_feature(geo_feat))
    ds = replace(ds, segments=ds.segments + tuple(segments))
    return snap_and_build(ds, snap_tol_m)[0]


def stage_match(ds, reference, field_map, buffer_m, step_m, fields, report_path=None) -> NetworkDataset:
    mapping = read_field_map(field_map) if field_map else None
    refs = load_reference(reference, mapping)
    results = match_all(ds, refs, buffer_m, step_m)
    ds, annotated = assign_attributes_with_report(ds, results, fields)
    matched = sum(1 for r in annotated if r.chosen is not None)
    log.info("matched %d of %d segments against %d reference lines", matched, len(annotated), len(refs))
    if report_path:
        payload = [
            {
                "target_id": r.target_id,
                "chosen": r.chosen.candidate_id if r.chosen else None,
                "buffer_m": r.buffer_m,
                "copied_fields": list(r.copied_fields),
                "candidates": [
                    {"id": c.candidate_id, "overlap_km": c.overlap_length_km, "mean_distance_m": c.mean_distance_m}
                    for c in r.all_candidates
                ],
            }
            for r in annotated
        ]
        Path(report_path).write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    return ds


def stage_defaults(ds, table_path=None) -> NetworkDataset:
    table = read_default_table(table_path) if table_path else DEFAULT_TABLE
    return apply_distribution_defaults(ds, build_graph(ds), table)


def stage_transition(ds, plan_path, demand_path, snap_tol_m) -> NetworkDataset:
    plan = load_plan(plan_path)
    demand = load_demand_specs(demand_path) if demand_path else ()
    return apply_transition(ds, plan, demand, snap_tol_m)


def stage_validate(ds, years, exceptions) -> ValidationReport:
    merged = list(ds.metadata.exceptions) + list(exceptions)
    return validate_years(ds, years, merged)


# ----------------------------------------------------------------- commands


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="gasgraph")
@click.option("-v", "--verbose", count=True, help="More log output (repeatable).")
def cli(verbose: int):
    """Build, transition and validate time-dependent gas/hydrogen networks."""
    level = logging.WARNING - 10 * verbose
    logging.basicConfig(level=max(level, logging.DEBUG), format="%(levelname)s %(name)s: %(message)s")


dataset_opt = opt("--dataset", "-d", required=True, type=click.Path(exists=True, dir_okay=False), help="Input dataset.")
output_opt = opt("--output", "-o", type=click.Path(dir_okay=False), help="Output dataset (default: overwrite --dataset).")
snap_opt = opt("--snap-tol-m", type=click.FloatRange(min=0), default=DEFAULT_SNAP_TOLERANCE_M, show_default=True)


@cli.command()
@opt("--input", "-i", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@opt("--output", "-o", required=True, type=click.Path(dir_okay=False))
@snap_opt
def ingest(input_path, output, snap_tol_m):
    """Load a layered GeoJSON file, snap endpoints and build the topology."""
    ds = stage_ingest(input_path, snap_tol_m)
    save_dataset(ds, output)
    click.echo(f"ingested {len(ds.segments)} segments, {len(ds.nodes)} nodes -> {output}")


@cli.command()
@dataset_opt
@opt("--control-points", required=True, type=click.Path(exists=True, dir_okay=False))
@opt("--trace", required=True, type=click.Path(exists=True, dir_okay=False))
@output_opt
@snap_opt
def georef(dataset, control_points, trace, output, snap_tol_m):
    """Georeference pixel traces and add them as segments."""
    pairs = read_control_points(control_points)
    _, residuals = estimate_affine(pairs)
    for line in residuals.lines():
        click.echo(line)
    ds = stage_georef(load_dataset(dataset), control_points, trace, snap_tol_m)
    save_dataset(ds, output or dataset)


@cli.command()
@dataset_opt
@opt("--reference", required=True, type=click.Path(exists=True, dir_okay=False))
@opt("--buffer-m", type=click.FloatRange(min=0, min_open=True), default=DEFAULT_BUFFER_M, show_default=True)
@opt("--sample-step-m", type=click.FloatRange(min=0, min_open=True), default=DEFAULT_STEP_M, show_default=True)
@opt("--field-map", type=click.Path(exists=True, dir_okay=False))
@opt("--fields", default=DEFAULT_FIELDS, show_default=True, help="Comma-separated attributes to copy.")
@opt("--report", type=click.Path(dir_okay=False), help="Write per-segment match details as JSON.")
@output_opt
def match(dataset, reference, buffer_m, sample_step_m, field_map, fields, report, output):
    """Copy attributes from the best-overlapping reference pipelines."""
    field_list = [f for f in fields.split(",") if f]
    ds = stage_match(load_dataset(dataset), reference, field_map, buffer_m, sample_step_m, field_list, report)
    save_dataset(ds, output or dataset)


@cli.command()
@dataset_opt
@opt("--table", type=click.Path(exists=True, dir_okay=False), help="Replacement default table.")
@output_opt
def defaults(dataset, table, output):
    """Fill unset distribution-pipe parameters with assumed ranges."""
    ds = stage_defaults(load_dataset(dataset), table)
    save_dataset(ds, output or dataset)


@cli.command()
@dataset_opt
@opt("--plan", required=True, type=click.Path(exists=True, dir_okay=False))
@opt("--demand", type=click.Path(exists=True, dir_okay=False), help="GeoJSON polygons with regional demand.")
@output_opt
@snap_opt
def transition(dataset, plan, demand, output, snap_tol_m):
    """Apply a hydrogen transition plan."""
    ds = stage_transition(load_dataset(dataset), plan, demand, snap_tol_m)
    save_dataset(ds, output or dataset)
    click.echo(f"{len(ds.segments)} segments, {len(ds.nodes)} nodes, {len(ds.short_pipes)} short pipes")


@cli.command()
@dataset_opt
@opt("--years", help="Years to check, e.g. 2026-2027,2040 (default: horizon and the year before each).")
@opt("--exceptions", type=click.Path(exists=True, dir_okay=False), help="Region codes or node ids exempt from supply checks.")
@opt("--report", type=click.Path(dir_okay=False), help="Write the report as JSON.")
def validate(dataset, years, exceptions, report):
    """Check carrier decoupling and supply connectivity per year."""
    ds = load_dataset(dataset)
    result = stage_validate(ds, parse_years(years), read_exceptions(exceptions))
    for line in result.lines():
        click.echo(line)
    if report:
        Path(report).write_text(result.to_json(), encoding="utf-8")
    if not result.ok:
        raise ValidationFailed(result)


@cli.command()
@dataset_opt
@opt("--year", type=int, help="Evaluate the network in effect in this year.")
@opt("--json", "as_json", is_flag=True, help="Print JSON instead of a table.")
def stats(dataset, year, as_json):
    """Segment counts and lengths by carrier, status and category."""
    report = compute_stats(load_dataset(dataset), year)
    if as_json:
        click.echo(json.dumps(report.to_dict(), indent=2))
    else:
        for line in report.lines():
            click.echo(line)


@cli.command()
@dataset_opt
@opt("--years", required=True)
@opt("--format", "fmt", type=click.Choice(["csv", "geojson"]), default="csv", show_default=True)
@opt("--out", required=True, type=click.Path(file_okay=False))
@opt("--exceptions", type=click.Path(exists=True, dir_okay=False))
@opt("--force", is_flag=True, help="Export even if validation fails.")
def export(dataset, years, fmt, out, exceptions, force):
    """Write per-year node and edge tables."""
    ds = load_dataset(dataset)
    merged = list(ds.metadata.exceptions) + read_exceptions(exceptions)
    paths = export_dataset(ds, parse_years(years) or [], out, fmt, force, merged)
    click.echo(f"wrote {len(paths)} files to {out}")


@cli.command()
@opt("--input", "-i", "input_path", type=click.Path(exists=True, dir_okay=False), help="Raw layered GeoJSON.")
@opt("--workdir", "-w", required=True, type=click.Path(file_okay=False))
@opt("--start-at", type=click.Choice(STAGES), default="ingest", show_default=True, help="Resume from this stage.")
@snap_opt
@opt("--control-points", type=click.Path(exists=True, dir_okay=False))
@opt("--trace", type=click.Path(exists=True, dir_okay=False))
@opt("--reference", type=click.Path(exists=True, dir_okay=False))
@opt("--field-map", type=click.Path(exists=True, dir_okay=False))
@opt("--buffer-m", type=click.FloatRange(min=0, min_open=True), default=DEFAULT_BUFFER_M, show_default=True)
@opt("--sample-step-m", type=click.FloatRange(min=0, min_open=True), default=DEFAULT_STEP_M, show_default=True)
@opt("--fields", default=DEFAULT_FIELDS, show_default=True)
@opt("--table", type=click.Path(exists=True, dir_okay=False))
@opt("--plan", type=click.Path(exists=True, dir_okay=False))
@opt("--demand", type=click.Path(exists=True, dir_okay=False))
@opt("--years")
@opt("--exceptions", type=click.Path(exists=True, dir_okay=False))
@opt("--format", "fmt", type=click.Choice(["csv", "geojson"]), default="csv", show_default=True)
def pipeline(input_path, workdir, start_at, snap_tol_m, control_points, trace, reference, field_map, buffer_m,
             sample_step_m, fields, table, plan, demand, years, exceptions, fmt):
    """Run every stage in order, writing one dataset file per stage."""
    work = Path(workdir)
    work.mkdir(parents=True, exist_ok=True)
    files = {name: work / f"{i:02d}_{name}.geojson" for i, name in enumerate(STAGES[:6], 1)}
    first = STAGES.index(start_at)
    if first == 0 and input_path is None:
        raise click.UsageError("--input is required when starting at ingest")
    if bool(control_points) != bool(trace):
        raise click.UsageError("--control-points and --trace go together")
    year_list = parse_years(years)
    exception_list = read_exceptions(exceptions)

    ds: NetworkDataset | None = None
    for stage in STAGES[first:]:
        try:
            if ds is None and stage != "ingest":
                prev = files[STAGES[STAGES.index(stage) - 1]]
                if not prev.exists():
                    raise GasGraphError(f"cannot resume: {prev} missing")
                ds = load_dataset(prev)
            if stage == "ingest":
                ds = stage_ingest(input_path, snap_tol_m)
            elif stage == "georef" and control_points:
                ds = stage_georef(ds, control_points, trace, snap_tol_m)
            elif stage == "build":
                ds = snap_and_build(ds, snap_tol_m)[0]
            elif stage == "match" and reference:
                field_list = [f for f in fields.split(",") if f]
                ds = stage_match(ds, reference, field_map, buffer_m, sample_step_m, field_list, work / "match_report.json")
            elif stage == "defaults":
                ds = stage_defaults(ds, table)
            elif stage == "transition" and plan:
                ds = stage_transition(ds, plan, demand, snap_tol_m)
            elif stage == "validate":
                report = stage_validate(ds, year_list, exception_list)
                (work / "validation.json").write_text(report.to_json(), encoding="utf-8")
                (work / "validation.txt").write_text("\n".join(report.lines()) + "\n", encoding="utf-8")
                if not report.ok:
                    raise ValidationFailed(report)
                year_list = report.years
            elif stage == "export":
                out = work / "export"
                if out.exists():
                    shutil.rmtree(out)
                merged = list(ds.metadata.exceptions) + exception_list
                export_dataset(ds, year_list or [], out, fmt, False, merged)
            if stage in files:
                save_dataset(ds, files[stage])
        except (GasGraphError, ValidationFailed, ValueError, OSError) as exc:
            raise StageError(stage, exc) from exc
        log.info("stage %s done", stage)
    click.echo(f"pipeline finished: {len(ds.segments)} segments, {len(ds.nodes)} nodes -> {work}")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="gasgraph", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as exc:
        exc.show()
        return EXIT_USAGE
    except StageError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION if isinstance(exc.cause, (ValidationFailed, ExportValidationError)) else EXIT_DATA
    except ValidationFailed as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except ExportValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VALIDATION
    except (GasGraphError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
