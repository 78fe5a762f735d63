"""Per-year views of the time-dependent network and their validation."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import TopologyError
from .geodata.model import Carrier, NetworkDataset, NodeKind, PipelineSegment, ShortPipe, Status
from .topology import Edge, Graph, connected_components

NG = Carrier.NATURAL_GAS
H2 = Carrier.HYDROGEN


def carrier_at(segment: PipelineSegment, year: int) -> Carrier:
    """Carrier a segment transports in ``year``; the switch year counts as hydrogen."""
    if segment.status is Status.REPURPOSED:
        return NG if year < segment.repurpose_year else H2
    if segment.status is Status.NEW_BUILD:
        return H2
    return segment.carrier


def segment_active(segment: PipelineSegment, year: int) -> bool:
    if segment.status is Status.NEW_BUILD:
        return year >= segment.commission_year
    return True


def short_pipe_active(short_pipe: ShortPipe, year: int) -> bool:
    if short_pipe.activate_year is not None and year < short_pipe.activate_year:
        return False
    if short_pipe.deactivate_year is not None and year >= short_pipe.deactivate_year:
        return False
    return True


@dataclass(frozen=True)
class TimestepView:
    year: int
    active_segments: Mapping[str, Carrier]
    active_short_pipes: tuple[str, ...]
    node_carrier: Mapping[str, Carrier]
    edge_endpoints: Mapping[str, tuple[str, str]]

    def graph(self) -> Graph:
        adjacency: dict[str, list[str]] = {n: [] for n in self.node_carrier}
        edges = {}
        for eid, (u, v) in self.edge_endpoints.items():
            edges[eid] = Edge(eid, u, v, is_short_pipe=eid not in self.active_segments)
            adjacency[u].append(eid)
            if v != u:
                adjacency[v].append(eid)
        return Graph({k: tuple(v) for k, v in adjacency.items()}, edges)

    def components(self) -> list[set[str]]:
        return connected_components(self.graph())

    def hydrogen_segments(self) -> set[str]:
        return {sid for sid, c in self.active_segments.items() if c is H2}


def topology_at(dataset: NetworkDataset, year: int) -> TimestepView:
    years_at: dict[str, set[int]] = defaultdict(set)
    active: dict[str, Carrier] = {}
    endpoints: dict[str, tuple[str, str]] = {}
    for seg in dataset.segments:
        if seg.from_node is None or seg.to_node is None:
            raise TopologyError(f"segment {seg.id!r} has unbound endpoints")
        if seg.status is Status.REPURPOSED:
            years_at[seg.from_node].add(seg.repurpose_year)
            years_at[seg.to_node].add(seg.repurpose_year)
        if segment_active(seg, year):
            active[seg.id] = carrier_at(seg, year)
            endpoints[seg.id] = (seg.from_node, seg.to_node)

    node_carrier: dict[str, Carrier] = {}
    for node in dataset.nodes:
        if node.carrier is Carrier.TRANSITIONAL:
            years = years_at.get(node.id)
            if not years:
                raise TopologyError(f"transitional node {node.id!r} has no incident repurposed segment")
            if len(years) > 1:
                raise TopologyError(
                    f"transitional node {node.id!r} joins segments repurposed in different years {sorted(years)}"
                )
            node_carrier[node.id] = NG if year < next(iter(years)) else H2
        else:
            node_carrier[node.id] = node.carrier

    pipes = []
    for sp in dataset.short_pipes:
        if short_pipe_active(sp, year):
            pipes.append(sp.id)
            endpoints[sp.id] = (sp.from_node, sp.to_node)
    return TimestepView(year, active, tuple(pipes), node_carrier, endpoints)


@dataclass(frozen=True)
class Violation:
    check: str
    year: int
    edge_ids: tuple[str, ...] = ()
    node_ids: tuple[str, ...] = ()
    message: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["edge_ids"] = list(self.edge_ids)
        d["node_ids"] = list(self.node_ids)
        return d

    def line(self) -> str:
        ids = ",".join(self.edge_ids or self.node_ids)
        return f"{self.year} {self.check}: {self.message} [{ids}]"


def validate_decoupling(view: TimestepView) -> list[Violation]:
    """Every active edge joins equal carriers and no component mixes carriers."""
    out = []
    nc = view.node_carrier
    for eid in sorted(view.edge_endpoints):
        u, v = view.edge_endpoints[eid]
        kind = "segment" if eid in view.active_segments else "short pipe"
        if nc[u] is not nc[v]:
            out.append(
                Violation("decoupling", view.year, (eid,), (u, v), f"{kind} joins {nc[u].value} and {nc[v].value}")
            )
        elif eid in view.active_segments and view.active_segments[eid] is not nc[u]:
            c = view.active_segments[eid]
            out.append(
                Violation("decoupling", view.year, (eid,), (u, v), f"{c.value} segment between {nc[u].value} nodes")
            )
    for comp in view.components():
        carriers = {nc[n] for n in comp}
        if len(carriers) > 1:
            out.append(
                Violation(
                    "decoupling",
                    view.year,
                    (),
                    tuple(sorted(comp)),
                    "component contains both natural_gas and hydrogen nodes",
                )
            )
    return out


_SUPPLY_KINDS = {
    NodeKind.BORDER_POINT: {NG, H2},
    NodeKind.STORAGE: {NG, H2},
    NodeKind.BIOGAS_PLANT: {NG},
    NodeKind.ELECTROLYZER: {H2},
}


def _excepted(node_id: str, nuts3: str | None, exceptions: Sequence[str]) -> bool:
    # region codes match by prefix, so "AT33" covers every NUTS-3 region of Tyrol
    for code in exceptions:
        if node_id == code or (nuts3 is not None and nuts3.startswith(code)):
            return True
    return False


def validate_supply(view: TimestepView, dataset: NetworkDataset, exceptions: Iterable[str] = ()) -> list[Violation]:
    """Each single-carrier subnetwork needs a source able to feed it.

    Sources are nodes (or facilities attached to nodes) of kind border
    point or storage, biogas plants for natural gas and electrolyzers for
    hydrogen. Components touching an exception (node id or region-code
    prefix) are exempt.
    """
    exceptions = tuple(exceptions)
    nodes = dataset.node_by_id
    nc = view.node_carrier
    facility_at: dict[str, list] = defaultdict(list)
    for f in dataset.facilities:
        if f.attached_node is not None:
            facility_at[f.attached_node].append(f)

    def supplies(node_id: str, carrier: Carrier) -> bool:
        if nc[node_id] is not carrier:
            return False
        if carrier in _SUPPLY_KINDS.get(nodes[node_id].kind, ()):
            return True
        return any(
            f.carrier is carrier and carrier in _SUPPLY_KINDS.get(f.kind, ()) for f in facility_at.get(node_id, ())
        )

    out = []
    for comp in view.components():
        if any(_excepted(n, nodes[n].nuts3, exceptions) for n in comp):
            continue
        for carrier in sorted({nc[n] for n in comp}, key=lambda c: c.value):
            members = sorted(n for n in comp if nc[n] is carrier)
            if not any(supplies(n, carrier) for n in members):
                out.append(
                    Violation(
                        "supply",
                        view.year,
                        (),
                        tuple(members),
                        f"isolated {carrier.value} subnetwork of {len(members)} nodes without supply",
                    )
                )
    return out


def event_years(dataset: NetworkDataset) -> list[int]:
    years = set()
    for s in dataset.segments:
        years.update(y for y in (s.repurpose_year, s.commission_year) if y is not None)
    for sp in dataset.short_pipes:
        years.update(y for y in (sp.activate_year, sp.deactivate_year) if y is not None)
    return sorted(years)


def default_years(dataset: NetworkDataset) -> list[int]:
    """Horizon years plus the year before each; falls back to event years."""
    base = dataset.metadata.horizon or tuple(event_years(dataset))
    return sorted(set(base) | {y - 1 for y in base})


@dataclass
class ValidationReport:
    years: list[int]
    violations: dict[int, dict[str, list[Violation]]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not any(v for checks in self.violations.values() for v in checks.values())

    def failing_years(self) -> list[int]:
        return [y for y in self.years if any(self.violations[y].values())]

    def lines(self) -> list[str]:
        out = []
        for y in self.years:
            checks = self.violations[y]
            counts = ", ".join(f"{name} {len(v)}" for name, v in checks.items())
            out.append(f"year {y}: {'ok' if not any(checks.values()) else 'FAIL'} ({counts})")
            for vs in checks.values():
                out.extend("  " + v.line() for v in vs)
        return out

    def to_json(self) -> str:
        payload = {
            "ok": self.ok,
            "years": [
                {"year": y, "checks": {name: [v.to_dict() for v in vs] for name, vs in self.violations[y].items()}}
                for y in self.years
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def validate_years(
    dataset: NetworkDataset, years: Iterable[int] | None = None, exceptions: Iterable[str] | None = None
) -> ValidationReport:
    years = sorted(set(years)) if years is not None else default_years(dataset)
    if exceptions is None:
        exceptions = dataset.metadata.exceptions
    exceptions = tuple(exceptions)
    report = ValidationReport(years)
    for y in years:
        view = topology_at(dataset, y)
        report.violations[y] = {
            "decoupling": validate_decoupling(view),
            "supply": validate_supply(view, dataset, exceptions),
        }
    return report
