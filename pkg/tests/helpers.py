"""Fixture builders shared by the test modules."""

from __future__ import annotations

import json
import math
import random
from pathlib import Path

from gasgraph.geodata.io import dataset_to_geojson, dumps_feature_collection
from gasgraph.geodata.model import (
    Carrier,
    Category,
    GeoPoint,
    Metadata,
    NetworkDataset,
    NetworkNode,
    NodeKind,
    PipelineSegment,
    Polyline,
    Status,
)
from gasgraph.transition import RepurposeEntry, TransitionPlan

HORIZON = (2027, 2030, 2035, 2040)


def line(*coords) -> Polyline:
    return Polyline.from_coords(coords)


def node(nid, lon, lat, kind=NodeKind.JUNCTION, carrier=Carrier.NATURAL_GAS, nuts3=None) -> NetworkNode:
    return NetworkNode(nid, GeoPoint(lon, lat), kind, carrier, nuts3)


def seg(sid, coords, category=Category.TRANSMISSION, **kw) -> PipelineSegment:
    return PipelineSegment(id=sid, geometry=line(*coords), category=category, **kw)


# ----------------------------------------------------------- staged example
#
#   A ---P1--- N ---P2--- B      P1 stays natural gas
#               \                P2 repurposed 2027
#                P3               P3 repurposed 2040
#                 \
#                  C
#
# Expected connectors after splitting N: S2 = N_T1 -> N_NG deactivated 2027,
# S3 = N_T2 -> N_NG deactivated 2040, S1 = N_T2 -> N_T1 activated 2040.

STAGED_COORDS = {
    "A": (16.00, 48.00),
    "N": (16.10, 48.00),
    "B": (16.20, 48.05),
    "C": (16.20, 47.95),
}


def staged_raw() -> NetworkDataset:
    c = STAGED_COORDS
    return NetworkDataset(
        nodes=(
            node("A", *c["A"], kind=NodeKind.BORDER_POINT, nuts3="AT127"),
            node("N", *c["N"], nuts3="AT127"),
            node("B", *c["B"], kind=NodeKind.STORAGE, nuts3="AT126"),
            node("C", *c["C"], kind=NodeKind.STORAGE, nuts3="AT124"),
        ),
        segments=(
            seg("P1", [c["A"], (16.05, 48.002), c["N"]]),
            seg("P2", [c["N"], c["B"]]),
            seg("P3", [c["N"], (16.15, 47.97), c["C"]]),
        ),
        metadata=Metadata(horizon=HORIZON),
    )


def staged_plan() -> TransitionPlan:
    return TransitionPlan(
        repurpose=(RepurposeEntry("P2", 2027), RepurposeEntry("P3", 2040)),
        horizon=HORIZON,
    )


def staged_transitioned() -> NetworkDataset:
    from gasgraph.topology import snap_and_build
    from gasgraph.transition import apply_transition

    ds, _ = snap_and_build(staged_raw(), 100.0)
    return apply_transition(ds, staged_plan())


STAGED_S1 = "SP_N_T2_H2"
STAGED_S2 = "SP_N_T1_NG"
STAGED_S3 = "SP_N_T2_NG"

# effective node carrier by year, written out by hand from the sketch above
NG, H2 = Carrier.NATURAL_GAS, Carrier.HYDROGEN
STAGED_NODE_TRUTH = {
    2026: {"A": NG, "N_NG": NG, "N_T1": NG, "N_T2": NG, "B": NG, "C": NG},
    2027: {"A": NG, "N_NG": NG, "N_T1": H2, "N_T2": NG, "B": H2, "C": NG},
    2035: {"A": NG, "N_NG": NG, "N_T1": H2, "N_T2": NG, "B": H2, "C": NG},
    2039: {"A": NG, "N_NG": NG, "N_T1": H2, "N_T2": NG, "B": H2, "C": NG},
    2040: {"A": NG, "N_NG": NG, "N_T1": H2, "N_T2": H2, "B": H2, "C": H2},
}
STAGED_SEGMENT_TRUTH = {
    2026: {"P1": NG, "P2": NG, "P3": NG},
    2027: {"P1": NG, "P2": H2, "P3": NG},
    2035: {"P1": NG, "P2": H2, "P3": NG},
    2039: {"P1": NG, "P2": H2, "P3": NG},
    2040: {"P1": NG, "P2": H2, "P3": H2},
}
STAGED_SHORT_PIPE_TRUTH = {
    2026: {STAGED_S2, STAGED_S3},
    2027: {STAGED_S3},
    2035: {STAGED_S3},
    2039: {STAGED_S3},
    2040: {STAGED_S1},
}


# ---------------------------------------------------------- synthetic grid

def synthetic_grid(rows: int, cols: int, seed: int = 0, spacing: float = 0.05):
    """Grid network with repurposed rows and new-build links between rows.

    Horizontal pipes of row r are repurposed in a row-specific year, column
    0 of every row is a border point so each hydrogen row has supply, and a
    new-build link joins converted rows r and r+2 at the last column once
    both are converted. Returns (raw dataset without bindings, plan, reference
    features as a GeoJSON dict).
    """
    rng = random.Random(seed)
    lon0, lat0 = 14.0, 47.0
    nodes = []
    pos = {}
    for r in range(rows):
        for c in range(cols):
            nid = f"G{r:03d}_{c:03d}"
            p = (round(lon0 + c * spacing, 6), round(lat0 + r * spacing * 0.7, 6))
            pos[(r, c)] = p
            corner = (r in (0, rows - 1) and c == cols - 1)
            kind = NodeKind.BORDER_POINT if c == 0 or corner else NodeKind.JUNCTION
            nodes.append(node(nid, *p, kind=kind, nuts3=f"AT{(r % 3) + 1}{(c % 3) + 1}"))

    def midpoint(a, b):
        jitter = spacing * 0.1
        return (
            round((a[0] + b[0]) / 2 + rng.uniform(-jitter, jitter), 6),
            round((a[1] + b[1]) / 2 + rng.uniform(-jitter, jitter), 6),
        )

    segments = []
    for r in range(rows):
        for c in range(cols - 1):
            a, b = pos[(r, c)], pos[(r, c + 1)]
            segments.append(seg(f"H{r:03d}_{c:03d}", [a, midpoint(a, b), b]))
    cats = (Category.TRANSMISSION, Category.DISTRIBUTION_L1, Category.DISTRIBUTION_L2)
    for r in range(rows - 1):
        for c in range(cols):
            a, b = pos[(r, c)], pos[(r + 1, c)]
            segments.append(seg(f"V{r:03d}_{c:03d}", [a, midpoint(a, b), b], category=cats[c % 3]))

    years = {r: HORIZON[r % len(HORIZON)] for r in range(rows)}
    repurpose = tuple(
        RepurposeEntry(f"H{r:03d}_{c:03d}", years[r]) for r in range(0, rows, 2) for c in range(cols - 1)
    )
    new_builds = []
    for r in range(0, rows - 2, 2):
        a, b = pos[(r, cols - 1)], pos[(r + 2, cols - 1)]
        new_builds.append(
            PipelineSegment(
                id=f"NB{r:03d}",
                geometry=line(a, (a[0] + spacing * 0.3, (a[1] + b[1]) / 2), b),
                category=Category.TRANSMISSION,
                carrier=Carrier.HYDROGEN,
                status=Status.NEW_BUILD,
                commission_year=max(years[r], years[r + 2]),
            )
        )
    raw = NetworkDataset(nodes=tuple(nodes), segments=tuple(segments), metadata=Metadata(horizon=HORIZON))
    plan = TransitionPlan(repurpose=repurpose, new_builds=tuple(new_builds), horizon=HORIZON)

    ref_features = []
    for i, s in enumerate(segments[::3]):
        coords = [[lon + 0.0005, lat + 0.0004] for lon, lat in s.geometry.coords]
        ref_features.append(
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {"osm_id": f"R{i:05d}", "name": f"Leitung {i}", "pipe_diameter_mm": 400 + 100 * (i % 5)},
            }
        )
    reference = {"type": "FeatureCollection", "features": ref_features}
    return raw, plan, reference


def unbind(ds: NetworkDataset) -> NetworkDataset:
    """Drop endpoint bindings as a raw digitised file would have them."""
    from dataclasses import replace

    return replace(ds, segments=tuple(replace(s, from_node=None, to_node=None) for s in ds.segments))


def plan_to_json(plan: TransitionPlan) -> dict:
    from gasgraph.geodata.io import segment_to_feature

    return {
        "horizon": list(plan.horizon),
        "repurpose": [{"segment": e.segment_id, "year": e.year} for e in plan.repurpose],
        "new_builds": [segment_to_feature(s) for s in plan.new_builds],
        "short_pipes": [
            {k: v for k, v in vars(sp).items() if v is not None} for sp in plan.explicit_short_pipes
        ],
    }


def write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj), encoding="utf-8")
    return path


def write_dataset_raw(path: Path, ds: NetworkDataset) -> Path:
    path.write_text(dumps_feature_collection(dataset_to_geojson(ds)), encoding="utf-8")
    return path


# ------------------------------------------------------ random mixed carrier

def random_mixed_network(seed: int, n_nodes: int = 120, extra_edges: int = 80):
    """Random connected network with existing, repurposed and new-build pipes,
    endpoints already bound to nodes."""
    rng = random.Random(seed)
    pts = {}
    nodes = []
    for i in range(n_nodes):
        p = (round(rng.uniform(9.5, 17.0), 6), round(rng.uniform(46.4, 49.0), 6))
        pts[f"N{i:04d}"] = p
        nodes.append(node(f"N{i:04d}", *p))
    ids = list(pts)
    pairs = set()
    for i in range(1, n_nodes):
        pairs.add((ids[rng.randrange(i)], ids[i]))
    while len(pairs) < n_nodes - 1 + extra_edges:
        a, b = rng.sample(ids, 2)
        if (a, b) not in pairs and (b, a) not in pairs:
            pairs.add((a, b))
    segments = []
    for k, (a, b) in enumerate(sorted(pairs)):
        pa, pb = pts[a], pts[b]
        mid = ((pa[0] + pb[0]) / 2 + rng.uniform(-0.05, 0.05), (pa[1] + pb[1]) / 2 + rng.uniform(-0.05, 0.05))
        roll = rng.random()
        kw = {}
        if roll < 0.45:
            pass
        elif roll < 0.8:
            kw = {"status": Status.REPURPOSED, "repurpose_year": rng.choice(HORIZON)}
        else:
            kw = {"status": Status.NEW_BUILD, "carrier": Carrier.HYDROGEN, "commission_year": rng.choice(HORIZON)}
        segments.append(seg(f"S{k:04d}", [pa, mid, pb], from_node=a, to_node=b, **kw))
    return NetworkDataset(nodes=tuple(nodes), segments=tuple(segments), metadata=Metadata(horizon=HORIZON))


def haversine_oracle_km(lon1, lat1, lon2, lat2, radius=6371.0088):
    """Textbook haversine, kept separate from the library implementation."""
    p1, p2 = math.radians(lat1), math.radians(lat2)
    a = math.sin((p2 - p1) / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(math.radians(lon2 - lon1) / 2) ** 2
    return 2 * radius * math.atan2(math.sqrt(a), math.sqrt(1 - a))


# ----------------------------------------------------------- georef fixtures


def random_affine(rng: random.Random):
    """Invertible pixel->lon/lat map over a 4000 px image landing near Austria."""
    while True:
        a, b, d, e = (rng.uniform(-1e-3, 1e-3) for _ in range(4))
        if abs(a * e - b * d) > 1e-7:
            break
    c, f = rng.uniform(9.0, 17.0), rng.uniform(46.0, 49.0)
    return a, b, c, d, e, f


def random_pixels(rng: random.Random, n: int):
    """``n`` pixel points, the first three guaranteed well spread (non-collinear)."""
    base = [(rng.uniform(0, 1000), rng.uniform(0, 1000)),
            (rng.uniform(3000, 4000), rng.uniform(0, 1000)),
            (rng.uniform(1500, 2500), rng.uniform(3000, 4000))]
    return base + [(rng.uniform(0, 4000), rng.uniform(0, 4000)) for _ in range(n - 3)]


def affine_oracle(pixels, lonlats):
    """Solve the affine map through exactly three points with Cramer's rule in exact rationals."""
    from fractions import Fraction as F

    (x1, y1), (x2, y2), (x3, y3) = [(F(x), F(y)) for x, y in pixels]
    det = x1 * (y2 - y3) - y1 * (x2 - x3) + (x2 * y3 - x3 * y2)

    def solve(r1, r2, r3):
        r1, r2, r3 = F(r1), F(r2), F(r3)
        p = (r1 * (y2 - y3) - y1 * (r2 - r3) + (r2 * y3 - r3 * y2)) / det
        q = (x1 * (r2 - r3) - r1 * (x2 - x3) + (x2 * r3 - x3 * r2)) / det
        r = (x1 * (y2 * r3 - y3 * r2) - y1 * (x2 * r3 - x3 * r2) + r1 * (x2 * y3 - x3 * y2)) / det
        return float(p), float(q), float(r)

    return solve(*[p[0] for p in lonlats]) + solve(*[p[1] for p in lonlats])


# ----------------------------------------------------------- matching oracle


def _local_xy(coords, lat0):
    r = 6371008.8
    k = math.cos(math.radians(lat0))
    return [(math.radians(lon) * r * k, math.radians(lat) * r) for lon, lat in coords]


def _unit(coords):
    import numpy as np

    lon, lat = np.radians(np.asarray(coords, dtype=float)).T
    return np.stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1)


def _angle(u, v):
    import numpy as np

    return np.arctan2(np.linalg.norm(np.cross(u, v), axis=-1), (u * v).sum(-1))


def _sphere_distances_m(points, line):
    """Minimum great-circle distance from each point to a polyline, in meters."""
    import numpy as np

    p = _unit(points)
    v = _unit(line)
    best = np.full(len(p), np.inf)
    for a, b in zip(v[:-1], v[1:]):
        n = np.cross(a, b)
        n /= np.linalg.norm(n)
        xt = np.abs(np.arcsin(np.clip(p @ n, -1, 1)))
        # foot of the perpendicular, tested for lying on the minor arc a-b
        foot = p - (p @ n)[:, None] * n
        foot /= np.linalg.norm(foot, axis=-1, keepdims=True)
        on_arc = np.isclose(_angle(foot, a[None]) + _angle(foot, b[None]), _angle(a, b), rtol=0, atol=1e-12)
        ends = np.minimum(_angle(p, a[None]), _angle(p, b[None]))
        best = np.minimum(best, np.where(on_arc, xt, ends))
    return best * 6371008.8


def overlap_oracle(target_coords, candidate_coords, buffer_m, step_m=1.0):
    """Brute-force overlap at ``step_m`` resolution.

    The target is cut into pieces of at most ``step_m``; each piece counts
    fully when its midpoint is within ``buffer_m`` of the candidate on the
    sphere. Returns (overlap km, mean distance m over the counted pieces).
    """
    import numpy as np

    mids, weights = [], []
    for (x1, y1), (x2, y2) in zip(target_coords[:-1], target_coords[1:]):
        chord_km = haversine_oracle_km(x1, y1, x2, y2)
        n = max(1, math.ceil(chord_km * 1000 / step_m))
        f = (np.arange(n) + 0.5) / n
        mids.append(np.column_stack([x1 + f * (x2 - x1), y1 + f * (y2 - y1)]))
        weights.append(np.full(n, chord_km / n))
    mids, weights = np.concatenate(mids), np.concatenate(weights)
    d = _sphere_distances_m(mids, candidate_coords)
    inside = d <= buffer_m
    mean = float((weights[inside] * d[inside]).sum() / weights[inside].sum()) if inside.any() else math.inf
    return float(weights[inside].sum()), mean


def _offset(coords, lat0, meters):
    """Shift a polyline by ``meters`` to the left of its direction (planar approximation)."""
    xy = _local_xy(coords, lat0)
    out = []
    for i, (x, y) in enumerate(xy):
        a = xy[max(0, i - 1)]
        b = xy[min(len(xy) - 1, i + 1)]
        dx, dy = b[0] - a[0], b[1] - a[1]
        n = math.hypot(dx, dy)
        out.append((x - dy / n * meters, y + dx / n * meters))
    r = 6371008.8
    k = math.cos(math.radians(lat0))
    return [(math.degrees(x / (r * k)), math.degrees(y / r)) for x, y in out]


def random_match_fixture(rng: random.Random):
    """An 8-15 km target plus 2-4 partial, offset and jittered candidate copies."""
    lon, lat = rng.uniform(10, 16), rng.uniform(46.5, 48.5)
    length_km = rng.uniform(8, 15)
    n_vertices = rng.randint(3, 7)
    heading = rng.uniform(0, 2 * math.pi)
    coords = [(lon, lat)]
    for _ in range(n_vertices - 1):
        heading += rng.uniform(-0.6, 0.6)
        step = length_km / (n_vertices - 1) / 111.195
        lon += step * math.cos(heading) / math.cos(math.radians(lat))
        lat += step * math.sin(heading)
        coords.append((lon, lat))
    dense = [coords[0]]
    for p, q in zip(coords[:-1], coords[1:]):
        for i in range(1, 11):
            f = i / 10
            dense.append((p[0] + f * (q[0] - p[0]), p[1] + f * (q[1] - p[1])))
    candidates = {}
    quarter = len(dense) // 4
    for k in range(rng.randint(2, 4)):
        a = rng.randint(0, len(dense) - quarter)
        b = rng.randint(a + quarter, len(dense))
        # lateral offsets stay clear of the jitter band around the 200 m edge
        far = rng.random() < 0.25
        offset = rng.uniform(260, 500) if far else rng.uniform(0, 150)
        part = _offset(dense[a:b], coords[0][1], offset * rng.choice((-1, 1)))
        part = [(x + rng.gauss(0, 1e-4), y + rng.gauss(0, 1e-4)) for x, y in part]
        candidates[f"C{k}"] = part
    return coords, candidates


# ----------------------------------------------------------- defaults fixture


def defaults_fixture() -> NetworkDataset:
    """One transmission pipe, an L1 pipe on it, an L2 pipe, then a downstream L1 pipe.

    TR: P0-P1, L1c: P1-P2, L2: P2-P3, L1d: P3-P4.
    """
    pts = {f"P{i}": (15.0 + 0.05 * i, 47.5) for i in range(5)}
    nodes = tuple(node(k, *v) for k, v in pts.items())

    def s(sid, a, b, cat):
        return seg(sid, [pts[a], pts[b]], category=cat, from_node=a, to_node=b)

    return NetworkDataset(
        nodes=nodes,
        segments=(
            s("TR", "P0", "P1", Category.TRANSMISSION),
            s("L1c", "P1", "P2", Category.DISTRIBUTION_L1),
            s("L2", "P2", "P3", Category.DISTRIBUTION_L2),
            s("L1d", "P3", "P4", Category.DISTRIBUTION_L1),
        ),
    )


def write_pipeline_inputs(folder: Path, raw: NetworkDataset, plan: TransitionPlan, reference: dict | None = None) -> dict:
    """Write raw dataset, plan, optional reference and field map; return CLI args by option."""
    folder.mkdir(parents=True, exist_ok=True)
    args = {
        "--input": str(write_dataset_raw(folder / "raw.geojson", raw)),
        "--plan": str(write_json(folder / "plan.json", plan_to_json(plan))),
    }
    if reference is not None:
        args["--reference"] = str(write_json(folder / "reference.geojson", reference))
        fm = folder / "fields.txt"
        fm.write_text("pipe_diameter_mm diameter_min_mm\npipe_diameter_mm diameter_max_mm\nname name\n")
        args["--field-map"] = str(fm)
    return args
