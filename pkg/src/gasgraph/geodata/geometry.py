"""Geodesic primitives on a spherical Earth.

All distances use the haversine formula with the IUGG mean Earth radius.
Functions taking arrays accept ``(..., 2)`` arrays of ``(lon, lat)`` in degrees.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .model import GeoPoint, Polyline

EARTH_RADIUS_KM = 6371.0088
EARTH_RADIUS_M = EARTH_RADIUS_KM * 1000.0


def haversine_km(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Great-circle distance between two points in kilometers."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def distance_m(a: GeoPoint, b: GeoPoint) -> float:
    return haversine_km(a.lon, a.lat, b.lon, b.lat) * 1000.0


def haversine_km_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Vectorised haversine; ``a`` and ``b`` broadcast against each other."""
    lon1, lat1 = np.radians(a[..., 0]), np.radians(a[..., 1])
    lon2, lat2 = np.radians(b[..., 0]), np.radians(b[..., 1])
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def geodesic_length(polyline: Polyline) -> float:
    """Length in km: sum of haversine distances over consecutive vertices."""
    pts = polyline.points
    return math.fsum(
        haversine_km(p.lon, p.lat, q.lon, q.lat) for p, q in zip(pts[:-1], pts[1:])
    )


def to_unit_vectors(lonlat: np.ndarray) -> np.ndarray:
    lon = np.radians(lonlat[..., 0])
    lat = np.radians(lonlat[..., 1])
    cl = np.cos(lat)
    return np.stack([cl * np.cos(lon), cl * np.sin(lon), np.sin(lat)], axis=-1)


def from_unit_vectors(xyz: np.ndarray) -> np.ndarray:
    lon = np.degrees(np.arctan2(xyz[..., 1], xyz[..., 0]))
    lat = np.degrees(np.arctan2(xyz[..., 2], np.hypot(xyz[..., 0], xyz[..., 1])))
    return np.stack([lon, lat], axis=-1)


def _angle_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    # atan2 form stays accurate for tiny angles, unlike arccos of the dot product
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.sum(u * v, axis=-1)
    return np.arctan2(cross, dot)


def point_to_polyline_m(points: np.ndarray, line: np.ndarray) -> np.ndarray:
    """Distance in meters from each point to the nearest chord of ``line``.

    ``points`` is ``(m, 2)``, ``line`` is ``(k, 2)`` lon/lat vertices. Each chord
    is treated as a great-circle arc; the distance is the cross-track distance
    when the foot of the perpendicular falls inside the arc, otherwise the
    distance to the nearer arc endpoint.
    """
    p = to_unit_vectors(np.asarray(points, dtype=float))[:, None, :]
    verts = to_unit_vectors(np.asarray(line, dtype=float))
    a = verts[:-1][None, :, :]
    b = verts[1:][None, :, :]

    normal = np.cross(a, b)
    norm = np.linalg.norm(normal, axis=-1, keepdims=True)
    n = normal / np.where(norm == 0.0, 1.0, norm)

    sin_xt = np.sum(p * n, axis=-1)
    cross_track = np.abs(np.arcsin(np.clip(sin_xt, -1.0, 1.0)))

    # foot of the perpendicular lies on the arc iff it is on the "inside" of both endpoints
    foot = p - sin_xt[..., None] * n
    inside = (np.sum(np.cross(a, foot) * n, axis=-1) >= 0) & (np.sum(np.cross(foot, b) * n, axis=-1) >= 0)
    inside &= norm[..., 0] > 0

    d_end = np.minimum(_angle_between(p, a), _angle_between(p, b))
    d = np.where(inside, cross_track, d_end)
    return d.min(axis=1) * EARTH_RADIUS_M


def densify(line: np.ndarray, step_m: float) -> np.ndarray:
    """Resample a lon/lat line so no interval exceeds ``step_m``.

    Every original vertex is kept; each chord is split into equal great-circle
    sub-arcs.
    """
    line = np.asarray(line, dtype=float)
    xyz = to_unit_vectors(line)
    out = [line[:1]]
    for i in range(len(line) - 1):
        u, v = xyz[i], xyz[i + 1]
        omega = float(_angle_between(u, v))
        n = max(1, math.ceil(omega * EARTH_RADIUS_M / step_m))
        t = np.arange(1, n + 1) / n
        if omega == 0.0:
            seg = np.repeat(xyz[i + 1][None, :], n, axis=0)
        else:
            s = math.sin(omega)
            seg = (np.sin((1 - t) * omega)[:, None] * u + np.sin(t * omega)[:, None] * v) / s
        pts = from_unit_vectors(seg)
        pts[-1] = line[i + 1]
        out.append(pts)
    return np.concatenate(out, axis=0)


def planar_centroid(rings: list[list[tuple[float, float]]]) -> tuple[float, float, float]:
    """Area-weighted centroid of a polygon in lon/lat treated as planar.

    ``rings[0]`` is the exterior ring, further rings are holes; each ring is
    closed (first vertex equals last). Returns ``(lon, lat, area)`` with area in
    square degrees. Orientation of the input rings is irrelevant.
    """
    total_a = 0.0
    cx = 0.0
    cy = 0.0
    for i, ring in enumerate(rings):
        a, sx, sy = _ring_moments(ring)
        sign = 1.0 if i == 0 else -1.0
        # normalise orientation so exterior adds and holes subtract
        if a < 0:
            a, sx, sy = -a, -sx, -sy
        total_a += sign * a
        cx += sign * sx
        cy += sign * sy
    if total_a == 0.0:
        return math.nan, math.nan, 0.0
    return cx / total_a, cy / total_a, total_a


def _ring_moments(ring: list[tuple[float, float]]) -> tuple[float, float, float]:
    # shoelace with the first vertex as local origin to limit cancellation
    x0, y0 = ring[0]
    a = sx = sy = 0.0
    for (x1, y1), (x2, y2) in zip(ring[:-1], ring[1:]):
        x1 -= x0
        y1 -= y0
        x2 -= x0
        y2 -= y0
        cross = x1 * y2 - x2 * y1
        a += cross
        sx += (x1 + x2) * cross
        sy += (y1 + y2) * cross
    a /= 2.0
    return a, sx / 6.0 + a * x0, sy / 6.0 + a * y0
