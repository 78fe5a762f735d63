"""Hydrogen transition plans applied to a natural-gas network.

The plan is applied in a fixed order: repurposing, new builds, node
splitting, short-pipe generation, regional demand. The result is a single
dataset whose topology changes over time through repurposing years,
commissioning years and the activation windows of short pipes.

Node splitting works on each node's incident segments, grouped by carrier
profile: pure natural gas (existing), pure hydrogen (new build or existing
hydrogen) and repurposed-in-year-Y. A node seeing more than one profile is
a *split site* ``n`` and is replaced by

* ``n_NG`` for the pure natural-gas pipes (and natural-gas attachments),
* ``n_H2`` for the pure hydrogen pipes (and hydrogen attachments),
* one transitional interface ``n_T<k>`` per repurposed segment end,
  numbered by (year, segment id).

Short pipes then wire each interface to the natural-gas side until its
year and to the hydrogen side from its year on. When a site has no pure
hydrogen pipe, the earliest-repurposed interface serves as the hydrogen
side; when it has no pure natural-gas pipe, the latest one serves as the
natural-gas side. With one existing pipe and two pipes repurposed in
Y1 < Y2 this yields three connectors: deactivate Y1, deactivate Y2 and
activate Y2.
"""

from __future__ import annotations

import json
import math
import os
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import GasGraphError, SchemaError, TransitionError
from .geodata.geometry import distance_m, planar_centroid
from .geodata.io import segment_from_feature
from .geodata.model import (
    Carrier,
    DemandPoint,
    GeoPoint,
    NetworkDataset,
    NetworkNode,
    PipelineSegment,
    ShortPipe,
    Status,
)
from .topology import DEFAULT_SNAP_TOLERANCE_M, snap_and_build

_SUB_NODE = re.compile(r"^(?P<base>.+)_(?P<tag>NG|H2|T\d+)$")


@dataclass(frozen=True)
class RepurposeEntry:
    segment_id: str
    year: int


@dataclass(frozen=True)
class TransitionPlan:
    repurpose: tuple[RepurposeEntry, ...] = ()
    new_builds: tuple[PipelineSegment, ...] = ()
    explicit_short_pipes: tuple[ShortPipe, ...] = ()
    horizon: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "horizon", tuple(sorted(set(self.horizon))))
        seen = set()
        for entry in self.repurpose:
            if entry.segment_id in seen:
                raise TransitionError(f"segment {entry.segment_id!r} is repurposed twice in the plan")
            seen.add(entry.segment_id)
        ids = [s.id for s in self.new_builds]
        if len(ids) != len(set(ids)):
            raise TransitionError("duplicate new-build ids in the plan")
        for s in self.new_builds:
            if s.status is not Status.NEW_BUILD:
                raise TransitionError(f"new build {s.id!r} must have status new_build")
        if self.horizon:
            lo, hi = self.horizon[0], self.horizon[-1]
            years = [(e.segment_id, e.year) for e in self.repurpose]
            years += [(s.id, s.commission_year) for s in self.new_builds]
            for sp in self.explicit_short_pipes:
                years += [(sp.id, y) for y in (sp.activate_year, sp.deactivate_year) if y is not None]
            for owner, year in years:
                if not lo <= year <= hi:
                    raise TransitionError(f"{owner!r}: year {year} outside plan horizon {lo}-{hi}")


@dataclass(frozen=True)
class RegionDemandSpec:
    """Demand of one NUTS-3 region; ``polygons`` holds rings per part (exterior first)."""

    nuts3: str
    polygons: tuple[tuple[tuple[tuple[float, float], ...], ...], ...]
    annual_demand: float
    carrier: Carrier = Carrier.HYDROGEN

    def __post_init__(self):
        if not self.nuts3:
            raise TransitionError("region spec needs a nuts3 code")
        if not math.isfinite(self.annual_demand) or self.annual_demand < 0:
            raise TransitionError(f"{self.nuts3}: annual_demand must be >= 0")
        if self.carrier is Carrier.TRANSITIONAL:
            raise TransitionError(f"{self.nuts3}: demand carrier must be natural_gas or hydrogen")
        if not self.polygons:
            raise TransitionError(f"{self.nuts3}: no polygon")
        for rings in self.polygons:
            for ring in rings:
                if len(ring) < 4 or tuple(ring[0]) != tuple(ring[-1]):
                    raise TransitionError(f"{self.nuts3}: polygon ring is not closed")

    @classmethod
    def from_ring(cls, nuts3: str, ring, annual_demand: float, carrier: Carrier = Carrier.HYDROGEN):
        return cls(nuts3, ((tuple(map(tuple, ring)),),), annual_demand, carrier)


# ---------------------------------------------------------------- plan files


def plan_from_json(obj: Any) -> TransitionPlan:
    if not isinstance(obj, dict):
        raise SchemaError("transition plan must be a JSON object")
    unknown = set(obj) - {"repurpose", "new_builds", "short_pipes", "horizon"}
    if unknown:
        raise SchemaError(f"unknown plan keys {sorted(unknown)}")
    repurpose = []
    for i, entry in enumerate(obj.get("repurpose") or []):
        try:
            repurpose.append(RepurposeEntry(str(entry["segment"]), int(entry["year"])))
        except (KeyError, TypeError, ValueError):
            raise SchemaError(f"repurpose[{i}] needs 'segment' and integer 'year'") from None
    new_builds = []
    for feature in obj.get("new_builds") or []:
        feature = dict(feature)
        props = dict(feature.get("properties") or {})
        props.setdefault("status", Status.NEW_BUILD.value)
        props.setdefault("carrier", Carrier.HYDROGEN.value)
        feature["properties"] = props
        new_builds.append(segment_from_feature(feature))
    short_pipes = []
    for i, raw in enumerate(obj.get("short_pipes") or []):
        try:
            short_pipes.append(
                ShortPipe(
                    id=str(raw["id"]),
                    from_node=str(raw["from_node"]),
                    to_node=str(raw["to_node"]),
                    activate_year=raw.get("activate_year"),
                    deactivate_year=raw.get("deactivate_year"),
                )
            )
        except (KeyError, TypeError):
            raise SchemaError(f"short_pipes[{i}] needs id, from_node, to_node") from None
    horizon = obj.get("horizon") or []
    if not all(isinstance(y, int) for y in horizon):
        raise SchemaError("horizon must be a list of integer years")
    return TransitionPlan(tuple(repurpose), tuple(new_builds), tuple(short_pipes), tuple(horizon))


def load_plan(path: str | os.PathLike) -> TransitionPlan:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GasGraphError(f"cannot read plan {path}: {exc}") from None
    return plan_from_json(obj)


def load_demand_specs(path: str | os.PathLike) -> list[RegionDemandSpec]:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise GasGraphError(f"cannot read demand file {path}: {exc}") from None
    specs = []
    for i, feat in enumerate(obj.get("features") or []):
        props = feat.get("properties") or {}
        geom = feat.get("geometry") or {}
        if geom.get("type") == "Polygon":
            parts = [geom["coordinates"]]
        elif geom.get("type") == "MultiPolygon":
            parts = geom["coordinates"]
        else:
            raise SchemaError(f"demand feature {i} must be a Polygon or MultiPolygon")
        try:
            specs.append(
                RegionDemandSpec(
                    nuts3=str(props["nuts3"]),
                    polygons=tuple(tuple(tuple(tuple(c[:2]) for c in ring) for ring in part) for part in parts),
                    annual_demand=float(props["annual_demand"]),
                    carrier=Carrier(props.get("carrier", Carrier.HYDROGEN.value)),
                )
            )
        except KeyError as exc:
            raise SchemaError(f"demand feature {i} lacks property {exc.args[0]!r}") from None
        except ValueError as exc:
            raise SchemaError(f"demand feature {i}: {exc}") from None
    return specs


# ---------------------------------------------------------------- operations


def apply_repurposing(dataset: NetworkDataset, plan: TransitionPlan) -> NetworkDataset:
    if not plan.repurpose:
        return dataset
    by_id = dataset.segment_by_id
    updates = {}
    for entry in plan.repurpose:
        seg = by_id.get(entry.segment_id)
        if seg is None:
            raise TransitionError(f"repurpose entry names unknown segment {entry.segment_id!r}")
        if seg.status is not Status.EXISTING or seg.carrier is not Carrier.NATURAL_GAS:
            raise TransitionError(
                f"segment {seg.id!r} is {seg.status.value}/{seg.carrier.value}; only existing natural-gas pipes can be repurposed"
            )
        updates[seg.id] = replace(seg, status=Status.REPURPOSED, repurpose_year=entry.year)
    return replace(dataset, segments=tuple(updates.get(s.id, s) for s in dataset.segments))


def add_new_builds(
    dataset: NetworkDataset,
    plan: TransitionPlan,
    snap_tolerance_m: float = DEFAULT_SNAP_TOLERANCE_M,
) -> NetworkDataset:
    if not plan.new_builds:
        return dataset
    existing = dataset.segment_by_id
    for s in plan.new_builds:
        if s.id in existing:
            raise TransitionError(f"new build id {s.id!r} already used by a segment")
    dataset = replace(dataset, segments=dataset.segments + plan.new_builds)
    return snap_and_build(dataset, snap_tolerance_m)[0]


def _profile(seg: PipelineSegment) -> tuple:
    if seg.status is Status.REPURPOSED:
        return ("R", seg.repurpose_year)
    if seg.status is Status.NEW_BUILD:
        return (Carrier.HYDROGEN.value,)
    return (seg.carrier.value,)


def _profile_carrier(profile: tuple) -> Carrier:
    if profile[0] == "R":
        return Carrier.TRANSITIONAL
    return Carrier(profile[0])


def split_shared_nodes(dataset: NetworkDataset, graph=None, plan: TransitionPlan | None = None) -> NetworkDataset:
    """Decouple nodes where pipes of different carrier profiles meet.

    Nodes with a single profile keep their id and get the matching carrier
    label (repurposed-only nodes become ``transitional``). ``graph`` is
    accepted for interface symmetry; incidence is read from the segments.
    Applying the function twice changes nothing the second time.
    """
    incident: dict[str, list[tuple[PipelineSegment, int]]] = defaultdict(list)
    for seg in dataset.segments:
        if seg.from_node is None or seg.to_node is None:
            raise TransitionError(f"segment {seg.id!r} is unbound; build the topology first")
        incident[seg.from_node].append((seg, 0))
        incident[seg.to_node].append((seg, 1))

    attachments: dict[str, list] = defaultdict(list)
    for rec in dataset.facilities + dataset.demand_points:
        if rec.attached_node is not None:
            attachments[rec.attached_node].append(rec)

    explicit = plan.explicit_short_pipes if plan is not None else ()
    taken = set(dataset.node_by_id)
    nodes: dict[str, NetworkNode] = {}
    rebind: dict[tuple[str, int], str] = {}
    rebind_attached: dict[str, str] = {}
    split_sites: dict[str, list[str]] = {}

    for node in dataset.nodes:
        ends = incident.get(node.id, [])
        profiles = {_profile(seg) for seg, _ in ends}
        if len(profiles) <= 1:
            if profiles:
                carrier = _profile_carrier(next(iter(profiles)))
                node = replace(node, carrier=carrier) if node.carrier is not carrier else node
            nodes[node.id] = node
            continue

        ng_ends = [(s, i) for s, i in ends if _profile(s) == (Carrier.NATURAL_GAS.value,)]
        h2_ends = [(s, i) for s, i in ends if _profile(s) == (Carrier.HYDROGEN.value,)]
        rp_ends = sorted(((s, i) for s, i in ends if s.status is Status.REPURPOSED), key=lambda t: (t[0].repurpose_year, t[0].id, t[1]))
        attached = attachments.get(node.id, [])
        need_ng = bool(ng_ends) or any(a.carrier is Carrier.NATURAL_GAS for a in attached)
        need_h2 = bool(h2_ends) or any(a.carrier is Carrier.HYDROGEN for a in attached)

        created = []

        def make(suffix: str, carrier: Carrier) -> str:
            new_id = f"{node.id}_{suffix}"
            if new_id in taken:
                raise TransitionError(f"cannot split node {node.id!r}: sub-node id {new_id!r} already exists")
            taken.add(new_id)
            nodes[new_id] = replace(node, id=new_id, carrier=carrier)
            created.append(new_id)
            return new_id

        if need_ng:
            ng_id = make("NG", Carrier.NATURAL_GAS)
            for s, i in ng_ends:
                rebind[(s.id, i)] = ng_id
        if need_h2:
            h2_id = make("H2", Carrier.HYDROGEN)
            for s, i in h2_ends:
                rebind[(s.id, i)] = h2_id
        for k, (s, i) in enumerate(rp_ends, 1):
            rebind[(s.id, i)] = make(f"T{k}", Carrier.TRANSITIONAL)
        for a in attached:
            rebind_attached[a.id] = f"{node.id}_{'NG' if a.carrier is Carrier.NATURAL_GAS else 'H2'}"
        split_sites[node.id] = created

    for sp in explicit + dataset.short_pipes:
        for end in (sp.from_node, sp.to_node):
            if end in split_sites:
                raise TransitionError(
                    f"short pipe {sp.id!r} refers to node {end!r}, which is split into "
                    f"{', '.join(split_sites[end])}; schedule it against one sub-node"
                )
        ends = {sp.from_node, sp.to_node}
        for base, subs in split_sites.items():
            if {f"{base}_NG", f"{base}_H2"} <= ends and sp.activate_year is None and sp.deactivate_year is None:
                raise TransitionError(
                    f"short pipe {sp.id!r} permanently joins {base}_NG and {base}_H2, coupling the carriers"
                )

    if not split_sites and all(nodes[n.id] is n for n in dataset.nodes):
        return dataset

    segments = []
    for seg in dataset.segments:
        u = rebind.get((seg.id, 0), seg.from_node)
        v = rebind.get((seg.id, 1), seg.to_node)
        segments.append(seg if (u, v) == (seg.from_node, seg.to_node) else replace(seg, from_node=u, to_node=v))
    facilities = tuple(
        replace(f, attached_node=rebind_attached[f.id]) if f.id in rebind_attached else f for f in dataset.facilities
    )
    demand = tuple(
        replace(d, attached_node=rebind_attached[d.id]) if d.id in rebind_attached else d for d in dataset.demand_points
    )
    return replace(
        dataset,
        nodes=tuple(nodes.values()),
        segments=tuple(segments),
        facilities=facilities,
        demand_points=demand,
    )


@dataclass
class _Site:
    base: str
    ng: str | None = None
    h2: str | None = None
    interfaces: list[tuple[int, str]] = field(default_factory=list)  # (year, node id)


def _split_sites(dataset: NetworkDataset) -> dict[str, _Site]:
    """Recover split sites from sub-node names, checked against carriers and location."""
    repurposed_at: dict[str, set[int]] = defaultdict(set)
    for seg in dataset.segments:
        if seg.status is Status.REPURPOSED:
            repurposed_at[seg.from_node].add(seg.repurpose_year)
            repurposed_at[seg.to_node].add(seg.repurpose_year)

    groups: dict[str, list[tuple[str, NetworkNode]]] = defaultdict(list)
    for node in dataset.nodes:
        m = _SUB_NODE.match(node.id)
        if m:
            groups[m.group("base")].append((m.group("tag"), node))

    sites = {}
    for base, members in groups.items():
        site = _Site(base)
        location = members[0][1].location
        for tag, node in members:
            if node.location != location:
                break
            if tag == "NG" and node.carrier is Carrier.NATURAL_GAS:
                site.ng = node.id
            elif tag == "H2" and node.carrier is Carrier.HYDROGEN:
                site.h2 = node.id
            elif tag.startswith("T") and node.carrier is Carrier.TRANSITIONAL:
                years = repurposed_at.get(node.id, set())
                if len(years) != 1:
                    raise TransitionError(
                        f"interface node {node.id!r} must touch exactly one repurposing year, found {sorted(years)}"
                    )
                site.interfaces.append((years.pop(), node.id))
            else:
                break
        else:
            if site.interfaces:
                site.interfaces.sort()
                sites[base] = site
    return sites


def generate_short_pipes(dataset: NetworkDataset, plan: TransitionPlan | None = None) -> NetworkDataset:
    """Create the time-scheduled connectors at every split site.

    Sites touched by an explicit short pipe from the plan get no automatic
    connectors; the explicit ones are added instead. Re-running is a no-op.
    """
    explicit = plan.explicit_short_pipes if plan is not None else ()
    node_ids = set(dataset.node_by_id)
    for sp in explicit:
        for end in (sp.from_node, sp.to_node):
            if end not in node_ids:
                raise TransitionError(f"explicit short pipe {sp.id!r} refers to unknown node {end!r}")

    overridden = set()
    sites = _split_sites(dataset)
    for sp in explicit:
        for end in (sp.from_node, sp.to_node):
            m = _SUB_NODE.match(end)
            base = m.group("base") if m else end
            if base in sites:
                overridden.add(base)

    generated: list[ShortPipe] = []
    for base in sorted(sites):
        if base in overridden:
            continue
        site = sites[base]
        ng_side = site.ng or site.interfaces[-1][1]
        h2_side = site.h2 or site.interfaces[0][1]
        for year, t in site.interfaces:
            if t != ng_side:
                generated.append(ShortPipe(f"SP_{t}_NG", t, ng_side, deactivate_year=year))
            if t != h2_side:
                generated.append(ShortPipe(f"SP_{t}_H2", t, h2_side, activate_year=year))

    current = {sp.id: sp for sp in dataset.short_pipes}
    added = []
    for sp in generated + list(explicit):
        old = current.get(sp.id)
        if old is None:
            current[sp.id] = sp
            added.append(sp)
        elif old != sp:
            raise TransitionError(f"short pipe id {sp.id!r} already exists with a different definition")
    if not added:
        return dataset
    seg_ids = set(dataset.segment_by_id)
    clash = seg_ids & {sp.id for sp in added}
    if clash:
        raise TransitionError(f"short pipe ids collide with segment ids: {sorted(clash)}")
    return replace(dataset, short_pipes=dataset.short_pipes + tuple(added))


def region_centroid(spec: RegionDemandSpec) -> GeoPoint:
    total = 0.0
    cx = cy = 0.0
    for rings in spec.polygons:
        x, y, area = planar_centroid([list(r) for r in rings])
        if area > 0:
            total += area
            cx += x * area
            cy += y * area
    if total <= 0.0:
        raise TransitionError(f"{spec.nuts3}: degenerate polygon with zero area")
    return GeoPoint(cx / total, cy / total)


def _nearest_node(dataset: NetworkDataset, p: GeoPoint, carrier: Carrier) -> str | None:
    allowed = {carrier}
    if carrier is Carrier.HYDROGEN:
        allowed.add(Carrier.TRANSITIONAL)
    best = None
    for n in dataset.nodes:
        if n.carrier in allowed:
            d = distance_m(p, n.location)
            if best is None or (d, n.id) < best:
                best = (d, n.id)
    return best[1] if best else None


def assign_regional_demand(
    dataset: NetworkDataset, specs: Iterable[RegionDemandSpec], attach: bool = False
) -> NetworkDataset:
    """Add one demand point per region at its area-weighted planar centroid.

    With ``attach`` each point is also bound to the nearest node able to
    serve its carrier (hydrogen demand may use transitional nodes).
    """
    points = []
    for spec in specs:
        where = region_centroid(spec)
        suffix = "H2" if spec.carrier is Carrier.HYDROGEN else "NG"
        node = _nearest_node(dataset, where, spec.carrier) if attach else None
        points.append(DemandPoint(f"D_{spec.nuts3}_{suffix}", where, spec.nuts3, spec.annual_demand, spec.carrier, node))
    if not points:
        return dataset
    return replace(dataset, demand_points=dataset.demand_points + tuple(points))


def apply_transition(
    dataset: NetworkDataset,
    plan: TransitionPlan,
    demand: Sequence[RegionDemandSpec] = (),
    snap_tolerance_m: float = DEFAULT_SNAP_TOLERANCE_M,
    attach_demand: bool = True,
) -> NetworkDataset:
    """Run all transition steps in their fixed order."""
    ds = apply_repurposing(dataset, plan)
    ds = add_new_builds(ds, plan, snap_tolerance_m)
    ds = split_shared_nodes(ds, plan=plan)
    ds = generate_short_pipes(ds, plan)
    ds = assign_regional_demand(ds, demand, attach=attach_demand)
    if plan.horizon:
        horizon = tuple(sorted(set(ds.metadata.horizon) | set(plan.horizon)))
        ds = replace(ds, metadata=replace(ds.metadata, horizon=horizon))
    return ds
