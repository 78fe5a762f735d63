"""Affine georeferencing of plan images from control points.

An image-space trace (pixel coordinates) is mapped to lon/lat with

    lon = a*x + b*y + c
    lat = d*x + e*y + f

fitted by least squares over user-supplied control-point pairs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import GeometryError, GeorefError
from .geodata.geometry import haversine_km
from .geodata.model import GeoPoint, Polyline

# relative smallest/largest singular value of the normalised design matrix
_COLLINEAR_RTOL = 1e-10


@dataclass(frozen=True)
class ControlPointPair:
    image_xy: tuple[float, float]
    geo: GeoPoint

    def __post_init__(self):
        if not np.all(np.isfinite(self.image_xy)):
            raise GeorefError(f"non-finite image coordinate {self.image_xy}")


@dataclass(frozen=True)
class AffineTransform:
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def __post_init__(self):
        if self.determinant == 0.0:
            raise GeorefError("affine transform is singular (a*e - b*d == 0)")

    @property
    def determinant(self) -> float:
        return self.a * self.e - self.b * self.d

    @property
    def coefficients(self) -> tuple[float, float, float, float, float, float]:
        return (self.a, self.b, self.c, self.d, self.e, self.f)

    @classmethod
    def identity(cls) -> AffineTransform:
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    def apply_xy(self, xy: np.ndarray) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        x, y = xy[..., 0], xy[..., 1]
        return np.stack([self.a * x + self.b * y + self.c, self.d * x + self.e * y + self.f], axis=-1)

    def inverse(self) -> AffineTransform:
        det = self.determinant
        ia, ib = self.e / det, -self.b / det
        id_, ie = -self.d / det, self.a / det
        return AffineTransform(ia, ib, -(ia * self.c + ib * self.f), id_, ie, -(id_ * self.c + ie * self.f))


@dataclass(frozen=True)
class ResidualReport:
    """Per-control-point misfit in meters, in input order."""

    residuals_m: tuple[float, ...]

    @property
    def rms_m(self) -> float:
        r = np.asarray(self.residuals_m)
        return float(np.sqrt(np.mean(r**2))) if len(r) else 0.0

    @property
    def max_m(self) -> float:
        return max(self.residuals_m, default=0.0)

    @property
    def worst_index(self) -> int:
        return int(np.argmax(self.residuals_m))

    def lines(self) -> list[str]:
        out = [f"point {i}: {r:.3f} m" for i, r in enumerate(self.residuals_m)]
        out.append(f"rms {self.rms_m:.3f} m, max {self.max_m:.3f} m")
        return out


def estimate_affine(pairs: Sequence[ControlPointPair]) -> tuple[AffineTransform, ResidualReport]:
    """Least-squares affine fit via the normal equations.

    Image coordinates are centred and scaled before forming the normal
    matrix, which keeps it well conditioned for pixel coordinates in the
    thousands; the solution is mapped back to raw pixel units afterwards.
    """
    if len(pairs) < 3:
        raise GeorefError(f"need at least 3 control points, got {len(pairs)}")
    xy = np.array([p.image_xy for p in pairs], dtype=float)
    geo = np.array([p.geo.coords for p in pairs], dtype=float)

    mu = xy.mean(axis=0)
    scale = float(np.abs(xy - mu).max()) or 1.0
    u = (xy - mu) / scale
    design = np.column_stack([u, np.ones(len(u))])

    sv = np.linalg.svd(np.column_stack([u[:, 0], u[:, 1]]), compute_uv=False)
    if len(sv) < 2 or sv[0] == 0.0 or sv[-1] / sv[0] < _COLLINEAR_RTOL:
        raise GeorefError("control points are collinear in image space; the fit is singular")

    geo_mu = geo.mean(axis=0)
    rhs = geo - geo_mu
    normal = design.T @ design
    coef = np.linalg.solve(normal, design.T @ rhs)
    # one step of iterative refinement against the unsquared system
    coef += np.linalg.solve(normal, design.T @ (rhs - design @ coef))

    # back to raw pixels: lon = p0*(x-mx)/s + p1*(y-my)/s + p2 + lon_mu
    out = []
    for k in range(2):
        p0, p1, p2 = coef[:, k]
        g = p0 / scale
        h = p1 / scale
        out.extend([g, h, p2 + geo_mu[k] - g * mu[0] - h * mu[1]])
    transform = AffineTransform(*map(float, out))

    fitted = transform.apply_xy(xy)
    residuals = tuple(
        haversine_km(fl, fa, gl, ga) * 1000.0 for (fl, fa), (gl, ga) in zip(fitted, geo)
    )
    return transform, ResidualReport(residuals)


def apply_transform(transform: AffineTransform, pixels: Iterable[Sequence[float]]) -> Polyline:
    """Map an image-space polyline vertex by vertex into lon/lat."""
    xy = np.array([tuple(p)[:2] for p in pixels], dtype=float)
    if xy.ndim != 2 or len(xy) == 0:
        raise GeometryError("empty pixel polyline")
    lonlat = transform.apply_xy(xy)
    bad = ~((np.abs(lonlat[:, 0]) <= 180.0) & (np.abs(lonlat[:, 1]) <= 90.0))
    if bad.any():
        i = int(np.argmax(bad))
        raise GeometryError(f"vertex {i} maps to ({lonlat[i, 0]}, {lonlat[i, 1]}), outside WGS84 bounds")
    return Polyline.from_coords(lonlat.tolist())


def read_control_points(path: str | os.PathLike) -> list[ControlPointPair]:
    """Parse ``x y lon lat`` lines; ``#`` starts a comment, commas also separate."""
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].replace(",", " ").strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise GeorefError(f"{path}:{lineno}: expected 4 fields 'x y lon lat', got {len(parts)}")
        try:
            x, y, lon, lat = map(float, parts)
        except ValueError:
            raise GeorefError(f"{path}:{lineno}: non-numeric field in {raw.strip()!r}") from None
        try:
            pairs.append(ControlPointPair((x, y), GeoPoint(lon, lat)))
        except GeometryError as exc:
            raise GeorefError(f"{path}:{lineno}: {exc}") from None
    return pairs
