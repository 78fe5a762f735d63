"""Exception hierarchy shared by all gasgraph modules."""

from __future__ import annotations


class GasGraphError(Exception):
    """Base class for data errors raised by gasgraph."""


class SchemaError(GasGraphError):
    """A dataset record violates the schema or one of its invariants."""

    def __init__(self, message: str, feature_id: str | None = None, field: str | None = None):
        self.feature_id = feature_id
        self.field = field
        prefix = []
        if feature_id is not None:
            prefix.append(f"feature {feature_id!r}")
        if field is not None:
            prefix.append(f"field {field!r}")
        super().__init__(f"{', '.join(prefix)}: {message}" if prefix else message)


class UnresolvedReferenceError(SchemaError):
    """An id reference (node, segment) points at nothing."""


class GeometryError(SchemaError):
    """Malformed or out-of-range geometry."""


class SnapAmbiguityError(GasGraphError):
    """An endpoint lies within tolerance of several mutually distant nodes."""

    def __init__(self, segment_id: str, candidates: list[str]):
        self.segment_id = segment_id
        self.candidates = candidates
        super().__init__(
            f"ambiguous snap for segment {segment_id!r}: candidates {', '.join(candidates)} "
            "are within tolerance of the endpoint but farther than tolerance from each other"
        )


class GeorefError(GasGraphError):
    """Control points cannot determine an affine transform."""


class TransitionError(GasGraphError):
    """A transition plan cannot be applied to the dataset."""


class TopologyError(GasGraphError):
    """The dataset is inconsistent for time-dependent evaluation."""
