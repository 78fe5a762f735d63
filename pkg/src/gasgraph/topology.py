"""Graph construction from segment geometries.

Segments are bound to nodes by their endpoints only; crossing geometries
without a shared node stay unconnected.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Mapping

from .errors import SnapAmbiguityError, TopologyError
from .geodata.geometry import EARTH_RADIUS_M, distance_m
from .geodata.model import (
    Category,
    GeoPoint,
    NetworkDataset,
    NetworkNode,
    NodeKind,
    PipelineSegment,
)

DEFAULT_SNAP_TOLERANCE_M = 100.0

_M_PER_DEG = math.pi * EARTH_RADIUS_M / 180.0


@dataclass(frozen=True)
class Edge:
    id: str
    u: str
    v: str
    is_short_pipe: bool = False

    def other(self, node: str) -> str:
        return self.v if node == self.u else self.u


@dataclass(frozen=True)
class Graph:
    """Undirected multigraph over segments and short pipes."""

    adjacency: Mapping[str, tuple[str, ...]]
    edges: Mapping[str, Edge]

    def degree(self, node_id: str) -> int:
        return len(self.adjacency.get(node_id, ()))

    def incident(self, node_id: str) -> list[Edge]:
        return [self.edges[e] for e in self.adjacency.get(node_id, ())]


def build_graph(dataset: NetworkDataset, include_short_pipes: bool = True) -> Graph:
    adjacency: dict[str, list[str]] = {n.id: [] for n in dataset.nodes}
    edges: dict[str, Edge] = {}
    for s in dataset.segments:
        if s.from_node is None or s.to_node is None:
            raise TopologyError(f"segment {s.id!r} has unbound endpoints; run snap_and_build first")
        edges[s.id] = Edge(s.id, s.from_node, s.to_node)
    if include_short_pipes:
        for sp in dataset.short_pipes:
            if sp.id in edges:
                raise TopologyError(f"short pipe id {sp.id!r} collides with a segment id")
            edges[sp.id] = Edge(sp.id, sp.from_node, sp.to_node, is_short_pipe=True)
    for e in edges.values():
        adjacency[e.u].append(e.id)
        if e.v != e.u:
            adjacency[e.v].append(e.id)
    return Graph({k: tuple(v) for k, v in adjacency.items()}, edges)


class _NodeIndex:
    """Uniform lat/lon grid for tolerance queries."""

    def __init__(self, tolerance_m: float):
        self.tol = tolerance_m
        self.cell = max(tolerance_m, 1.0) / _M_PER_DEG
        self.cells: dict[tuple[int, int], list[NetworkNode]] = defaultdict(list)

    def _key(self, p: GeoPoint) -> tuple[int, int]:
        return (math.floor(p.lat / self.cell), math.floor(p.lon / self.cell))

    def add(self, node: NetworkNode) -> None:
        self.cells[self._key(node.location)].append(node)

    def within(self, p: GeoPoint) -> list[tuple[float, NetworkNode]]:
        ki, kj = self._key(p)
        lat_extent = abs(p.lat) + self.cell
        coslat = math.cos(math.radians(min(lat_extent, 89.999)))
        span = math.ceil(1.0 / max(coslat, 1e-6))
        # near the poles fall back to scanning all cells
        if span > 360.0 / self.cell:
            candidates: Iterable[NetworkNode] = (n for bucket in self.cells.values() for n in bucket)
        else:
            candidates = (
                n
                for di in (-1, 0, 1)
                for dj in range(-span, span + 1)
                for n in self.cells.get((ki + di, kj + dj), ())
            )
        out = []
        for n in candidates:
            d = distance_m(p, n.location)
            if d <= self.tol:
                out.append((d, n))
        out.sort(key=lambda t: (t[0], t[1].id))
        return out


def _fresh_ids(taken: set[str], prefix: str = "J"):
    i = 1
    while True:
        candidate = f"{prefix}{i:04d}"
        if candidate not in taken:
            taken.add(candidate)
            yield candidate
        i += 1


def snap_and_build(
    dataset: NetworkDataset, snap_tolerance_m: float = DEFAULT_SNAP_TOLERANCE_M
) -> tuple[NetworkDataset, Graph]:
    """Bind every segment endpoint to a node and build the graph.

    An endpoint already bound to a node within tolerance keeps its binding.
    Otherwise it binds to the nearest dataset node within tolerance (ties by
    id), then to the nearest junction spawned earlier in this run, and if
    neither exists a new junction is created at the endpoint. Segments are
    processed in id order, so the result is deterministic.
    """
    if snap_tolerance_m < 0 or not math.isfinite(snap_tolerance_m):
        raise ValueError(f"snap tolerance must be a finite value >= 0, got {snap_tolerance_m}")

    existing = _NodeIndex(snap_tolerance_m)
    for n in dataset.nodes:
        existing.add(n)
    spawned = _NodeIndex(snap_tolerance_m)
    new_nodes: list[NetworkNode] = []
    ids = _fresh_ids({n.id for n in dataset.nodes})
    nodes = dataset.node_by_id

    def resolve(seg: PipelineSegment, bound: str | None, p: GeoPoint) -> str:
        if bound is not None and distance_m(p, nodes[bound].location) <= snap_tolerance_m:
            return bound
        for index in (existing, spawned):
            hits = index.within(p)
            if not hits:
                continue
            for i, (_, a) in enumerate(hits):
                for _, b in hits[i + 1 :]:
                    if distance_m(a.location, b.location) > snap_tolerance_m:
                        raise SnapAmbiguityError(seg.id, [n.id for _, n in hits])
            return hits[0][1].id
        node = NetworkNode(id=next(ids), location=p, kind=NodeKind.JUNCTION, carrier=seg.carrier)
        spawned.add(node)
        new_nodes.append(node)
        return node.id

    segments = []
    changed = False
    for seg in dataset.segments:
        u = resolve(seg, seg.from_node, seg.geometry.start)
        v = resolve(seg, seg.to_node, seg.geometry.end)
        if (u, v) != (seg.from_node, seg.to_node):
            seg = replace(seg, from_node=u, to_node=v)
            changed = True
        segments.append(seg)

    if changed or new_nodes:
        dataset = replace(dataset, nodes=dataset.nodes + tuple(new_nodes), segments=tuple(segments))
    return dataset, build_graph(dataset)


def connected_components(
    graph: Graph, edge_filter: Callable[[Edge], bool] | None = None
) -> list[set[str]]:
    """Components over the edges passing ``edge_filter``.

    Only nodes incident to at least one such edge appear. Components are
    returned sorted by their smallest node id.
    """
    adj: dict[str, list[str]] = defaultdict(list)
    for e in graph.edges.values():
        if edge_filter is None or edge_filter(e):
            adj[e.u].append(e.v)
            adj[e.v].append(e.u)
    seen: set[str] = set()
    comps = []
    for start in sorted(adj):
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in comp:
                    comp.add(nxt)
                    stack.append(nxt)
        seen |= comp
        comps.append(comp)
    return comps


class L1Class(str, Enum):
    TRANSMISSION_CONNECTED = "transmission_connected"
    DOWNSTREAM = "downstream"


def classify_l1_segments(graph: Graph, dataset: NetworkDataset) -> dict[str, L1Class]:
    """Label each Level-1 distribution segment by whether it touches transmission."""
    transmission_nodes: set[str] = set()
    for s in dataset.segments:
        if s.category is Category.TRANSMISSION:
            transmission_nodes.update(e for e in (s.from_node, s.to_node) if e is not None)
    out = {}
    for s in dataset.segments:
        if s.category is not Category.DISTRIBUTION_L1:
            continue
        if s.id not in graph.edges:
            raise TopologyError(f"segment {s.id!r} is not part of the graph")
        e = graph.edges[s.id]
        touches = e.u in transmission_nodes or e.v in transmission_nodes
        out[s.id] = L1Class.TRANSMISSION_CONNECTED if touches else L1Class.DOWNSTREAM
    return out


def endpoint_offsets_m(dataset: NetworkDataset) -> dict[str, tuple[float, float]]:
    """Distance from each bound segment's geometry endpoints to its nodes."""
    nodes = dataset.node_by_id
    out = {}
    for s in dataset.segments:
        if s.from_node is None or s.to_node is None:
            continue
        out[s.id] = (
            distance_m(s.geometry.start, nodes[s.from_node].location),
            distance_m(s.geometry.end, nodes[s.to_node].location),
        )
    return out
