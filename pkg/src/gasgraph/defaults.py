"""Assumed technical parameters for distribution pipelines.

Public data rarely gives diameters or pressures for distribution pipes, so
unset values are filled from a table of (min, max) ranges keyed by
category and, for Level-1 pipes, by whether the pipe touches the
transmission grid.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace
from pathlib import Path

from .errors import SchemaError
from .geodata.model import AttrSource, Category, NetworkDataset
from .topology import Graph, L1Class, build_graph, classify_l1_segments

ANY = "*"

FIELD_PAIRS = {
    "diameter": ("diameter_min_mm", "diameter_max_mm"),
    "pressure": ("pressure_min_bar", "pressure_max_bar"),
}


@dataclass(frozen=True)
class DefaultRule:
    category: Category
    connectivity: str  # L1Class value or "*"
    field: str  # key of FIELD_PAIRS
    min: float
    max: float

    def __post_init__(self):
        if self.field not in FIELD_PAIRS:
            raise ValueError(f"unknown default field {self.field!r}")
        if self.connectivity != ANY and self.connectivity not in {c.value for c in L1Class}:
            raise ValueError(f"unknown connectivity class {self.connectivity!r}")
        if self.min > self.max:
            raise ValueError(f"default range {self.min}-{self.max} is inverted")


DEFAULT_TABLE: tuple[DefaultRule, ...] = (
    DefaultRule(Category.DISTRIBUTION_L1, L1Class.TRANSMISSION_CONNECTED.value, "diameter", 500.0, 600.0),
    DefaultRule(Category.DISTRIBUTION_L1, L1Class.DOWNSTREAM.value, "diameter", 300.0, 400.0),
    DefaultRule(Category.DISTRIBUTION_L1, ANY, "pressure", 20.0, 70.0),
    DefaultRule(Category.DISTRIBUTION_L2, ANY, "diameter", 100.0, 200.0),
    DefaultRule(Category.DISTRIBUTION_L2, ANY, "pressure", 6.0, 16.0),
)


def read_default_table(path: str | os.PathLike) -> tuple[DefaultRule, ...]:
    """Parse ``category connectivity field min max`` rows.

    Whitespace or commas separate fields, ``#`` starts a comment and ``*``
    matches any connectivity class. The file replaces the built-in table.
    """
    rules = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise SchemaError(f"{path}:{lineno}: expected 'category connectivity field min max'")
        try:
            rules.append(DefaultRule(Category(parts[0]), parts[1], parts[2], float(parts[3]), float(parts[4])))
        except ValueError as exc:
            raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return tuple(rules)


def _lookup(table, category: Category, connectivity: str | None, field: str) -> DefaultRule | None:
    exact = wildcard = None
    for rule in table:
        if rule.category is not category or rule.field != field:
            continue
        if rule.connectivity == connectivity:
            exact = rule
        elif rule.connectivity == ANY:
            wildcard = rule
    return exact or wildcard


def apply_distribution_defaults(
    dataset: NetworkDataset,
    graph: Graph | None = None,
    table: tuple[DefaultRule, ...] = DEFAULT_TABLE,
) -> NetworkDataset:
    """Fill unset diameter/pressure values of distribution segments.

    Precedence is per field: a value that is already set (matched, manual or
    previously assumed) is never replaced, but its unset neighbours are
    filled. Segments whose source was ``unset`` become ``assumed``.
    """
    if graph is None:
        graph = build_graph(dataset)
    l1 = classify_l1_segments(graph, dataset)
    segments = []
    changed = False
    for seg in dataset.segments:
        if seg.category is Category.TRANSMISSION:
            segments.append(seg)
            continue
        connectivity = l1[seg.id].value if seg.id in l1 else None
        changes = {}
        for field, (lo_name, hi_name) in FIELD_PAIRS.items():
            rule = _lookup(table, seg.category, connectivity, field)
            if rule is None:
                continue
            lo, hi = getattr(seg, lo_name), getattr(seg, hi_name)
            new_lo = rule.min if lo is None else lo
            new_hi = rule.max if hi is None else hi
            if new_lo > new_hi:
                # a one-sided known value outside the assumed range; leave it alone
                continue
            if lo is None:
                changes[lo_name] = new_lo
            if hi is None:
                changes[hi_name] = new_hi
        if changes:
            if seg.attr_source is AttrSource.UNSET:
                changes["attr_source"] = AttrSource.ASSUMED
            seg = replace(seg, **changes)
            changed = True
        segments.append(seg)
    return replace(dataset, segments=tuple(segments)) if changed else dataset
