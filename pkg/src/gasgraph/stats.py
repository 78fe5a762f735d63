"""Summary statistics over a dataset or one timestep."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .geodata.model import NetworkDataset
from .temporal import topology_at


@dataclass(frozen=True)
class GroupStats:
    count: int
    length_km: float


@dataclass
class StatsReport:
    """Segment counts and lengths per (carrier, status, category).

    Without a year the carrier is the stored label (repurposed pipes count
    under natural_gas); with a year it is the carrier in effect and only
    active segments and short pipes are counted.
    """

    year: int | None
    groups: dict[tuple[str, str, str], GroupStats] = field(default_factory=dict)
    node_count: int = 0
    short_pipe_count: int = 0
    facility_counts: dict[str, int] = field(default_factory=dict)
    demand_point_count: int = 0

    def _total(self, index: int) -> dict[str, GroupStats]:
        counts: Counter = Counter()
        lengths: dict[str, list[float]] = defaultdict(list)
        for key, g in self.groups.items():
            counts[key[index]] += g.count
            lengths[key[index]].append(g.length_km)
        return {k: GroupStats(counts[k], math.fsum(lengths[k])) for k in sorted(counts)}

    def by_carrier(self) -> dict[str, GroupStats]:
        return self._total(0)

    def by_status(self) -> dict[str, GroupStats]:
        return self._total(1)

    @property
    def segment_count(self) -> int:
        return sum(g.count for g in self.groups.values())

    @property
    def total_length_km(self) -> float:
        return math.fsum(g.length_km for g in self.groups.values())

    def to_dict(self) -> dict:
        return {
            "year": self.year,
            "groups": [
                {"carrier": c, "status": s, "category": k, "count": g.count, "length_km": g.length_km}
                for (c, s, k), g in sorted(self.groups.items())
            ],
            "by_status": {k: {"count": g.count, "length_km": g.length_km} for k, g in self.by_status().items()},
            "by_carrier": {k: {"count": g.count, "length_km": g.length_km} for k, g in self.by_carrier().items()},
            "segments": self.segment_count,
            "length_km": self.total_length_km,
            "nodes": self.node_count,
            "short_pipes": self.short_pipe_count,
            "facilities": dict(sorted(self.facility_counts.items())),
            "demand_points": self.demand_point_count,
        }

    def lines(self) -> list[str]:
        head = "full dataset" if self.year is None else f"year {self.year}"
        out = [f"statistics ({head})", f"{'carrier':<12} {'status':<11} {'category':<16} {'count':>6} {'length_km':>11}"]
        for (c, s, k), g in sorted(self.groups.items()):
            out.append(f"{c:<12} {s:<11} {k:<16} {g.count:>6} {g.length_km:>11.3f}")
        label = "status" if self.year is None else "carrier"
        totals = self.by_status() if self.year is None else self.by_carrier()
        for k, g in totals.items():
            out.append(f"total {label} {k}: {g.count} segments, {g.length_km:.3f} km")
        out.append(f"nodes: {self.node_count}")
        out.append(f"short pipes: {self.short_pipe_count}")
        for kind, n in sorted(self.facility_counts.items()):
            out.append(f"facilities {kind}: {n}")
        out.append(f"demand points: {self.demand_point_count}")
        return out


def compute_stats(dataset: NetworkDataset, year: int | None = None) -> StatsReport:
    report = StatsReport(year)
    lengths: dict[tuple[str, str, str], list[float]] = defaultdict(list)
    if year is None:
        for s in dataset.segments:
            lengths[(s.carrier.value, s.status.value, s.category.value)].append(s.length_km)
        report.short_pipe_count = len(dataset.short_pipes)
    else:
        view = topology_at(dataset, year)
        by_id = dataset.segment_by_id
        for sid, carrier in view.active_segments.items():
            s = by_id[sid]
            lengths[(carrier.value, s.status.value, s.category.value)].append(s.length_km)
        report.short_pipe_count = len(view.active_short_pipes)
    report.groups = {k: GroupStats(len(v), math.fsum(v)) for k, v in sorted(lengths.items())}
    report.node_count = len(dataset.nodes)
    report.facility_counts = dict(Counter(f.kind.value for f in dataset.facilities))
    report.demand_point_count = len(dataset.demand_points)
    return report
