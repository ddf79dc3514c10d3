# src/tools/geometry.py
"""
Coordinate normalisation between the physical two-ring part and the shared
unit space.

Each ring's radial extent [c - t/2, c + t/2] maps linearly onto its unit band
(outer ring -> [0.75, 1.00], inner ring -> [0.25, 0.50]); the angle is kept and
the height is divided by the part height H. The band (0.50, 0.75) is the spoke
gap and is never produced.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from src.errors import GeometryError, PointNotInRing, UnitRadiusOutOfBand

logger = logging.getLogger("FLARE Geometry")

OUTER_BAND = (0.75, 1.00)
INNER_BAND = (0.25, 0.50)

# Relative slack on ring membership (times the ring thickness / part height)
RING_TOLERANCE = 1e-9
# Absolute slack on unit-space band membership
UNIT_TOLERANCE = 1e-9


class Region(str, Enum):
    OUTER = "outer"
    INNER = "inner"
    SPOKE = "spoke"
    OUTSIDE = "outside"


@dataclass(frozen=True)
class RingSpec:
    """One ring: centreline radius and thickness in mm, plus its unit-space band."""

    center_radius: float
    thickness: float
    band_min: float
    band_max: float

    def __post_init__(self):
        if not self.thickness > 0:
            raise GeometryError(f"ring thickness must be positive, got {self.thickness}")
        if not 0 < self.band_min < self.band_max <= 1:
            raise GeometryError(
                f"ring band must satisfy 0 < r_min < r_max <= 1, got [{self.band_min}, {self.band_max}]"
            )
        if not self.r_inner > 0:
            raise GeometryError(
                f"ring inner radius c - t/2 must be positive, got {self.r_inner}"
            )

    @property
    def r_inner(self) -> float:
        return self.center_radius - self.thickness / 2

    @property
    def r_outer(self) -> float:
        return self.center_radius + self.thickness / 2

    def contains(self, r: np.ndarray) -> np.ndarray:
        slack = RING_TOLERANCE * self.thickness
        return (r >= self.r_inner - slack) & (r <= self.r_outer + slack)

    def in_band(self, r_u: np.ndarray) -> np.ndarray:
        return (r_u >= self.band_min - UNIT_TOLERANCE) & (r_u <= self.band_max + UNIT_TOLERANCE)

    def to_unit_radius(self, r: np.ndarray) -> np.ndarray:
        lam = np.clip((r - self.r_inner) / self.thickness, 0.0, 1.0)
        return self.band_min + (self.band_max - self.band_min) * lam

    def to_physical_radius(self, r_u: np.ndarray) -> np.ndarray:
        lam = np.clip((r_u - self.band_min) / (self.band_max - self.band_min), 0.0, 1.0)
        return self.r_inner + self.thickness * lam


@dataclass(frozen=True)
class DomainSpec:
    outer: RingSpec
    inner: RingSpec
    height: float

    def __post_init__(self):
        if not self.height > 0:
            raise GeometryError(f"part height must be positive, got {self.height}")
        # Rings may touch: the extreme parameter corners put both edges at 30 mm
        if self.inner.r_outer > self.outer.r_inner:
            raise GeometryError(
                f"rings overlap: inner ring ends at {self.inner.r_outer} mm, "
                f"outer ring starts at {self.outer.r_inner} mm"
            )
        if not self.inner.band_max < self.outer.band_min:
            raise GeometryError("inner and outer unit bands must be disjoint")

    @classmethod
    def from_params(cls, params) -> "DomainSpec":
        """Build the domain from a parameter vector (r_out, t_out, r_in, t_in, h, P, v)."""
        p = np.asarray(params, dtype=np.float64)
        if p.shape != (7,):
            raise GeometryError(f"expected a 7-parameter vector, got shape {p.shape}")
        return cls(
            outer=RingSpec(float(p[0]), float(p[1]), *OUTER_BAND),
            inner=RingSpec(float(p[2]), float(p[3]), *INNER_BAND),
            height=float(p[4]),
        )


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise GeometryError(f"points must have shape (n, 3), got {np.shape(points)}")
    return arr


def classify_points(points, domain: DomainSpec) -> np.ndarray:
    """Vectorised classify_point; returns an object array of Region values."""
    pts = _as_points(points)
    r = np.hypot(pts[:, 0], pts[:, 1])
    z = pts[:, 2]
    z_slack = RING_TOLERANCE * domain.height
    z_ok = (z >= -z_slack) & (z <= domain.height + z_slack)

    in_outer = domain.outer.contains(r)
    in_inner = domain.inner.contains(r) & ~in_outer
    in_gap = (r > domain.inner.r_outer) & (r < domain.outer.r_inner) & ~in_outer & ~in_inner

    regions = np.full(len(pts), Region.OUTSIDE, dtype=object)
    regions[z_ok & in_gap] = Region.SPOKE
    regions[z_ok & in_inner] = Region.INNER
    regions[z_ok & in_outer] = Region.OUTER
    return regions


def classify_point(point, domain: DomainSpec) -> Region:
    return classify_points(point, domain)[0]


def normalize_points(points, domain: DomainSpec) -> np.ndarray:
    """
    Map physical points (mm) to unit space.

    Raises:
        PointNotInRing: if any point is in the spoke gap or outside the part
    """
    pts = _as_points(points)
    regions = classify_points(pts, domain)
    bad = (regions != Region.OUTER) & (regions != Region.INNER)
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise PointNotInRing(
            f"{int(bad.sum())} point(s) not in a ring; first {pts[first].tolist()} "
            f"classified {regions[first].value}"
        )

    r = np.hypot(pts[:, 0], pts[:, 1])
    is_outer = regions == Region.OUTER
    r_u = np.where(
        is_outer, domain.outer.to_unit_radius(r), domain.inner.to_unit_radius(r)
    )
    scale = r_u / r
    return np.column_stack(
        [pts[:, 0] * scale, pts[:, 1] * scale, pts[:, 2] / domain.height]
    )


def normalize_point(point, domain: DomainSpec) -> np.ndarray:
    return normalize_points(point, domain)[0]


def unit_band_mask(units) -> np.ndarray:
    """True where a unit point has its radius in a band and 0 <= z_u <= 1."""
    pts = _as_points(units)
    r_u = np.hypot(pts[:, 0], pts[:, 1])
    in_inner = (r_u >= INNER_BAND[0] - UNIT_TOLERANCE) & (r_u <= INNER_BAND[1] + UNIT_TOLERANCE)
    in_outer = (r_u >= OUTER_BAND[0] - UNIT_TOLERANCE) & (r_u <= OUTER_BAND[1] + UNIT_TOLERANCE)
    z_ok = (pts[:, 2] >= -UNIT_TOLERANCE) & (pts[:, 2] <= 1 + UNIT_TOLERANCE)
    return (in_inner | in_outer) & z_ok


def denormalize_points(units, domain: DomainSpec) -> np.ndarray:
    """
    Map unit-space points back to physical coordinates (mm).

    Raises:
        UnitRadiusOutOfBand: if a radius falls in the spoke gap, below 0.25 or
            above 1.00, or if z_u is outside [0, 1]
    """
    pts = _as_points(units)
    bad = ~unit_band_mask(pts)
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise UnitRadiusOutOfBand(
            f"{int(bad.sum())} unit point(s) outside the radial bands or height range; "
            f"first {pts[first].tolist()}"
        )

    r_u = np.hypot(pts[:, 0], pts[:, 1])
    is_outer = domain.outer.in_band(r_u)
    r = np.where(
        is_outer, domain.outer.to_physical_radius(r_u), domain.inner.to_physical_radius(r_u)
    )
    scale = r / r_u
    z = np.clip(pts[:, 2], 0.0, 1.0) * domain.height
    return np.column_stack([pts[:, 0] * scale, pts[:, 1] * scale, z])


def denormalize_point(unit, domain: DomainSpec) -> np.ndarray:
    return denormalize_points(unit, domain)[0]


def sample_unit_points(n_per_ring: int, seed: int) -> np.ndarray:
    """
    Draw training coordinates directly in unit space.

    Each ring contributes n_per_ring points, uniform in angle, band radius and
    z_u; inner-ring points come first. The unit space is shared by all
    geometries, so no domain is needed; denormalize_points maps the draw onto
    a particular part.

    Returns:
        Array of shape (2 * n_per_ring, 3)
    """
    if n_per_ring < 1:
        raise GeometryError(f"n_per_ring must be >= 1, got {n_per_ring}")
    rng = np.random.default_rng(seed)
    blocks = []
    for band_min, band_max in (INNER_BAND, OUTER_BAND):
        theta = rng.uniform(0.0, 2.0 * np.pi, n_per_ring)
        r_u = rng.uniform(band_min, band_max, n_per_ring)
        z_u = rng.uniform(0.0, 1.0, n_per_ring)
        blocks.append(np.column_stack([r_u * np.cos(theta), r_u * np.sin(theta), z_u]))
    return np.vstack(blocks)
