"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py`` for just the summary lines.
Criterion 8 needs the published dataset; point GASGRAPH_PUBLISHED_DATASET
at it to enable that check.
"""

import math
import os
import random
import resource
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from gasgraph.defaults import apply_distribution_defaults
from gasgraph.geodata import (
    Category,
    GeoPoint,
    NetworkDataset,
    PipelineSegment,
    Polyline,
    geodesic_length,
    load_dataset,
    save_dataset,
)
from gasgraph.georef import AffineTransform, ControlPointPair, estimate_affine
from gasgraph.matcher import ReferenceFeature, match_segment
from gasgraph.stats import compute_stats
from gasgraph.temporal import topology_at, validate_decoupling
from gasgraph.topology import snap_and_build
from gasgraph.transition import apply_transition, generate_short_pipes, split_shared_nodes

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

from helpers import (  # noqa: E402
    STAGED_NODE_TRUTH,
    STAGED_S1,
    STAGED_S2,
    STAGED_S3,
    STAGED_SEGMENT_TRUTH,
    STAGED_SHORT_PIPE_TRUTH,
    defaults_fixture,
    staged_raw,
    staged_transitioned,
    haversine_oracle_km,
    overlap_oracle,
    random_affine,
    random_match_fixture,
    random_mixed_network,
    random_pixels,
    synthetic_grid,
    write_pipeline_inputs,
)

_capture = None


@pytest.fixture(autouse=True)
def _capture_manager(request):
    global _capture
    _capture = request.config.pluginmanager.getplugin("capturemanager")
    yield


def emit(line: str) -> None:
    """Print past pytest's output capture so the line always shows."""
    if _capture is None:
        print(line, flush=True)
        return
    with _capture.global_and_fixture_disabled():
        print("\n" + line, flush=True)


def report(number: int, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    emit(line)
    assert ok, line


# ---------------------------------------------------------------- 1


def test_criterion_1_staged_replica():
    t0 = time.perf_counter()
    ds = staged_transitioned()
    problems = []
    for year in (2026, 2027, 2035, 2039, 2040):
        view = topology_at(ds, year)
        violations = validate_decoupling(view)
        if violations:
            problems.append(f"{year}: {len(violations)} violations")
        if dict(view.active_segments) != STAGED_SEGMENT_TRUTH[year]:
            problems.append(f"{year}: segment carriers differ")
        if dict(view.node_carrier) != STAGED_NODE_TRUTH[year]:
            problems.append(f"{year}: node carriers differ")
        if set(view.active_short_pipes) != STAGED_SHORT_PIPE_TRUTH[year]:
            problems.append(f"{year}: short pipes differ")
    elapsed = time.perf_counter() - t0
    schedule = {sp.id: (sp.activate_year, sp.deactivate_year) for sp in ds.short_pipes}
    expected = {STAGED_S1: (2040, None), STAGED_S2: (None, 2027), STAGED_S3: (None, 2040)}
    if schedule != expected:
        problems.append(f"short-pipe schedule {schedule}")
    ok = not problems and elapsed < 1.0
    report(1, ok, f"staged example, 5 years, {elapsed:.3f} s (< 1 s)" + (f"; {problems}" if problems else ""))


# ---------------------------------------------------------------- 2


def test_criterion_2_matching_oracle():
    t0 = time.perf_counter()
    fixtures = 25
    non_tie = agree = 0
    worst = 0.0
    matching = 0.0
    for seed in range(fixtures):
        target_coords, cands = random_match_fixture(random.Random(1000 + seed))
        target = PipelineSegment(id="T", geometry=Polyline.from_coords(target_coords), category=Category.TRANSMISSION)
        refs = [ReferenceFeature(k, Polyline.from_coords(v)) for k, v in cands.items()]
        t1 = time.perf_counter()
        result = match_segment(target, refs, buffer_m=200, step_m=25)
        matching += time.perf_counter() - t1
        oracle = {k: overlap_oracle(target_coords, v, 200, step_m=1.0) for k, v in cands.items()}
        got = {c.candidate_id: c.overlap_length_km for c in result.all_candidates}
        for k, (ov, _) in oracle.items():
            if ov > 0:
                worst = max(worst, abs(got.get(k, 0.0) - ov) / ov)
            elif k in got:
                worst = max(worst, math.inf)
        ranked = sorted(oracle, key=lambda k: (-oracle[k][0], oracle[k][1], k))
        best = oracle[ranked[0]][0]
        second = oracle[ranked[1]][0] if len(ranked) > 1 else 0.0
        if best > 0 and best - second > 0.02 * best:
            non_tie += 1
            agree += result.chosen is not None and result.chosen.candidate_id == ranked[0]
    elapsed = time.perf_counter() - t0
    ok = fixtures >= 20 and non_tie > 0 and agree == non_tie and worst <= 0.02 and matching < 10
    report(
        2,
        ok,
        f"{fixtures} fixtures, selection {agree}/{non_tie} non-tie, worst overlap error {worst:.2%} (<= 2%), "
        f"matching {matching:.2f} s (< 10 s), {elapsed:.2f} s with oracle",
    )


# ---------------------------------------------------------------- 3


def test_criterion_3_defaults():
    ds = defaults_fixture()
    out = apply_distribution_defaults(ds)
    got = {
        s.id: ((s.diameter_min_mm, s.diameter_max_mm), (s.pressure_min_bar, s.pressure_max_bar))
        for s in out.segments
    }
    expected = {
        "TR": ((None, None), (None, None)),
        "L1c": ((500.0, 600.0), (20.0, 70.0)),
        "L1d": ((300.0, 400.0), (20.0, 70.0)),
        "L2": ((100.0, 200.0), (6.0, 16.0)),
    }
    again = apply_distribution_defaults(out)
    ok = got == expected and again == out
    report(3, ok, f"table values exact {got == expected}, re-application no-op {again == out}")


# ---------------------------------------------------------------- 4


def test_criterion_4_node_splitting():
    seeds = range(20)
    bad_edges = 0
    worst_len = 0.0
    min_nodes = math.inf
    for seed in seeds:
        raw = random_mixed_network(seed, n_nodes=120, extra_edges=80)
        min_nodes = min(min_nodes, len(raw.nodes))
        out = generate_short_pipes(split_shared_nodes(raw))
        nodes = out.node_by_id
        bad_edges += sum(nodes[s.from_node].carrier is not nodes[s.to_node].carrier for s in out.segments)
        before = math.fsum(s.length_km for s in raw.segments)
        after = math.fsum(s.length_km for s in out.segments)
        worst_len = max(worst_len, abs(after - before) / before)
    ok = bad_edges == 0 and worst_len <= 1e-9 and min_nodes >= 100
    report(4, ok, f"{len(seeds)} fixtures of >= {min_nodes} nodes, {bad_edges} mixed edges, length drift {worst_len:.1e}")


# ---------------------------------------------------------------- 5


def test_criterion_5_georef_recovery():
    worst = 0.0
    singular = 0
    for seed in range(50):
        rng = random.Random(seed)
        t = AffineTransform(*random_affine(rng))
        pixels = random_pixels(rng, 3)
        pairs = [ControlPointPair(p, GeoPoint(*t.apply_xy(np.array(p)))) for p in pixels]
        _, res = estimate_affine(pairs)
        worst = max(worst, res.max_m)
        singular += t.determinant == 0
    ok = worst < 1e-6 and singular == 0
    report(5, ok, f"50 transforms, worst residual {worst:.2e} m (< 1e-6 m)")


# ---------------------------------------------------------------- 6


def test_criterion_6_geodesic():
    rng = random.Random(6)
    worst = 0.0
    for _ in range(100):
        n = rng.randint(2, 12)
        lon, lat = rng.uniform(-170, 170), rng.uniform(-80, 80)
        coords = [(lon, lat)]
        for _ in range(n - 1):
            lon = max(-180, min(180, lon + rng.uniform(-2, 2)))
            lat = max(-89, min(89, lat + rng.uniform(-2, 2)))
            coords.append((lon, lat))
        expected = sum(haversine_oracle_km(*p, *q) for p, q in zip(coords[:-1], coords[1:]))
        got = geodesic_length(Polyline.from_coords(coords))
        worst = max(worst, abs(got - expected) / expected)
    meridian = geodesic_length(Polyline.from_coords([(13.0, 47.0), (13.0, 48.0)]))
    ok = worst <= 1e-3 and abs(meridian - 111.195) <= 0.001
    report(6, ok, f"100 polylines, worst deviation {worst:.1e} (<= 0.1%), 1 deg meridian {meridian:.4f} km")


# ---------------------------------------------------------------- 7


def _fixtures():
    raw, plan, _ = synthetic_grid(6, 6, seed=7)
    grid, _ = snap_and_build(raw, 100)
    yield "empty", NetworkDataset()
    yield "staged raw", staged_raw()
    yield "staged transitioned", staged_transitioned()
    yield "defaults", apply_distribution_defaults(defaults_fixture())
    yield "grid transitioned", apply_transition(grid, plan)
    for seed in range(3):
        yield f"random {seed}", generate_short_pipes(split_shared_nodes(random_mixed_network(seed)))


def test_criterion_7_roundtrip(tmp_path):
    failed = []
    count = 0
    for name, ds in _fixtures():
        count += 1
        a = save_dataset(ds, tmp_path / "a.geojson").read_bytes()
        b = save_dataset(load_dataset(tmp_path / "a.geojson"), tmp_path / "b.geojson").read_bytes()
        if a != b:
            failed.append(name)
    report(7, not failed, f"{count} fixtures byte-identical after save-load-save" + (f"; differ: {failed}" if failed else ""))


# ---------------------------------------------------------------- 8

PUBLISHED_TARGETS = {
    "existing NG segments": 586,
    "existing NG km": 5000.0,
    "repurposed segments": 113,
    "repurposed km": 1253.0,
    "new-build segments": 39,
    "new-build km": 814.0,
    "nodes": 720,
}


def test_criterion_8_published_scale():
    path = os.environ.get("GASGRAPH_PUBLISHED_DATASET")
    if not path or not Path(path).exists():
        emit("[SKIP] criterion 8: conditional on the published dataset; set GASGRAPH_PUBLISHED_DATASET to run it")
        pytest.skip("published dataset not supplied")
    stats = compute_stats(load_dataset(path))
    status = stats.by_status()
    got = {
        "existing NG segments": status["existing"].count if "existing" in status else 0,
        "existing NG km": status["existing"].length_km if "existing" in status else 0.0,
        "repurposed segments": status["repurposed"].count if "repurposed" in status else 0,
        "repurposed km": status["repurposed"].length_km if "repurposed" in status else 0.0,
        "new-build segments": status["new_build"].count if "new_build" in status else 0,
        "new-build km": status["new_build"].length_km if "new_build" in status else 0.0,
        "nodes": stats.node_count,
    }
    off = {k: (got[k], v) for k, v in PUBLISHED_TARGETS.items() if abs(got[k] - v) > 0.02 * v}
    report(8, not off, "published dataset statistics within 2%" + (f"; off: {off}" if off else ""))


# ---------------------------------------------------------------- 9


def test_criterion_9_scale(tmp_path):
    raw, plan, reference = synthetic_grid(23, 23, seed=9)
    inputs = write_pipeline_inputs(tmp_path / "in", raw, plan, reference)
    argv = [
        sys.executable, "-m", "gasgraph", "pipeline",
        "-i", inputs["--input"], "-w", str(tmp_path / "work"),
        "--plan", inputs["--plan"], "--reference", inputs["--reference"], "--field-map", inputs["--field-map"],
    ]
    before = resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss
    t0 = time.perf_counter()
    proc = subprocess.run(argv, capture_output=True, text=True)
    elapsed = time.perf_counter() - t0
    # ru_maxrss is in KiB on Linux; it is the largest child seen so far, an upper bound
    peak_mb = max(before, resource.getrusage(resource.RUSAGE_CHILDREN).ru_maxrss) / 1024
    n_segments = len(raw.segments) + len(plan.new_builds)
    ok = proc.returncode == 0 and n_segments >= 1000 and elapsed < 10 and peak_mb < 500
    detail = f"{n_segments} segments, exit {proc.returncode}, {elapsed:.2f} s (< 10 s), peak RSS {peak_mb:.0f} MB (< 500 MB)"
    if proc.returncode:
        detail += f"; stderr: {proc.stderr.strip()[-300:]}"
    report(9, ok, detail)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
