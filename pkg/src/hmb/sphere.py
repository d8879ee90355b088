"""Geometry on the unit sphere for viewing-direction data.

A viewing direction is either an :class:`AngularPosition` with longitude
``theta`` in ``[0, 2*pi)`` and latitude ``phi`` in ``[-pi/2, pi/2]``, or a
unit 3-vector ``(x, y, z)`` where::

    x = cos(theta) * cos(phi)
    y = sin(theta) * cos(phi)
    z = sin(phi)

so ``z`` points at the north pole and ``(1, 0, 0)`` is the equatorial
direction at longitude zero.  All functions broadcast over trailing numpy
dimensions unless noted otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

__all__ = [
    "AngularPosition",
    "FovSpec",
    "ang_to_vec",
    "vec_to_ang",
    "orthodromic_distance",
    "angular_error",
    "mean_squared_error",
    "grid_cell_angles",
    "grid_cell_vectors",
    "fov_mask",
    "mean_overlap",
    "tile_labels",
    "tile_iou",
]

# Unit-norm tolerance accepted by vec_to_ang.
_NORM_TOL = 1e-6


class AngularPosition(NamedTuple):
    """Longitude/latitude pair in radians."""

    theta: float
    phi: float


@dataclass(frozen=True)
class FovSpec:
    """Field-of-view extents and the rasterization grid used for overlap.

    Attributes:
        h_extent: horizontal extent in radians (default 100 degrees).
        v_extent: vertical extent in radians (default 90 degrees).
        grid_w: rasterization grid width in cells.
        grid_h: rasterization grid height in cells.
    """

    h_extent: float = math.radians(100.0)
    v_extent: float = math.radians(90.0)
    grid_w: int = 360
    grid_h: int = 180

    def __post_init__(self) -> None:
        if not (0.0 < self.h_extent <= 2.0 * math.pi):
            raise ValueError(f"h_extent out of range: {self.h_extent}")
        if not (0.0 < self.v_extent <= math.pi):
            raise ValueError(f"v_extent out of range: {self.v_extent}")
        if self.grid_w < 8 or self.grid_h < 8:
            raise ValueError("rasterization grid must be at least 8x8")


def ang_to_vec(theta, phi) -> np.ndarray:
    """Convert longitude/latitude to a unit 3-vector.

    Args:
        theta: longitude in radians (any real; wrapped mod 2*pi).
        phi: latitude in radians, must lie in [-pi/2, pi/2].

    Returns:
        Array of shape ``(..., 3)``; a plain shape-(3,) array for scalars.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(np.abs(phi) > math.pi / 2 + 1e-9):
        raise ValueError("latitude must lie in [-pi/2, pi/2]")
    phi = np.clip(phi, -math.pi / 2, math.pi / 2)
    cos_phi = np.cos(phi)
    return np.stack(
        [np.cos(theta) * cos_phi, np.sin(theta) * cos_phi, np.sin(phi)],
        axis=-1,
    )


def vec_to_ang(v) -> Tuple[np.ndarray, np.ndarray]:
    """Convert unit 3-vectors to (theta, phi) with theta in [0, 2*pi).

    Directions at the poles get theta = 0 by convention.  Raises
    ``ValueError`` if any input norm deviates from 1 by more than 1e-6.
    """
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(norm - 1.0) > _NORM_TOL):
        worst = float(np.max(np.abs(norm - 1.0)))
        raise ValueError(f"input is not unit-norm (max |norm-1| = {worst:.3g})")
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    theta = np.mod(np.arctan2(y, x), 2.0 * math.pi)
    # At the poles longitude is undefined; pin it to zero.
    theta = np.where(np.hypot(x, y) < 1e-12, 0.0, theta)
    phi = np.arcsin(np.clip(z, -1.0, 1.0))
    if v.ndim == 1:
        return float(theta), float(phi)
    return theta, phi


def orthodromic_distance(u, v):
    """Great-circle distance between unit vectors, in radians.

    The dot product is clamped to [-1, 1] so antipodal/identical pairs do
    not fall outside the arccos domain through rounding.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    dot = np.sum(u * v, axis=-1)
    d = np.arccos(np.clip(dot, -1.0, 1.0))
    return float(d) if d.ndim == 0 else d


def angular_error(a, b):
    """Angle-domain error sqrt(wrap(dtheta)^2 + dphi^2).

    The longitude difference is reduced to (-pi, pi] via atan2 so the error
    is seam-free; latitude differences need no wrapping.  ``a`` and ``b``
    are (theta, phi) pairs or arrays of shape ``(..., 2)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dtheta = a[..., 0] - b[..., 0]
    dtheta = np.arctan2(np.sin(dtheta), np.cos(dtheta))
    dphi = a[..., 1] - b[..., 1]
    e = np.sqrt(dtheta**2 + dphi**2)
    return float(e) if e.ndim == 0 else e


def mean_squared_error(a, b):
    """Half the summed squared angle differences, without seam handling.

    Kept for comparability with tile-based evaluation pipelines that report
    it.  Known defect, on purpose: longitudes just across the 0/2*pi seam
    (e.g. 0 vs 2*pi - eps) score near (2*pi)^2/2 instead of ~0.  Use
    :func:`angular_error` or :func:`orthodromic_distance` when the number
    has to mean something geometrically.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    e = ((a[..., 0] - b[..., 0]) ** 2 + (a[..., 1] - b[..., 1]) ** 2) / 2.0
    return float(e) if e.ndim == 0 else e


def grid_cell_angles(width: int, height: int) -> Tuple[np.ndarray, np.ndarray]:
    """Cell-center longitudes/latitudes of an equirectangular grid.

    Cell (row, col) covers longitudes [2*pi*col/W, 2*pi*(col+1)/W) and
    latitudes decreasing from the north pole; centers are returned as
    ``lon`` of shape (W,) and ``lat`` of shape (H,), row 0 northmost.
    """
    lon = 2.0 * math.pi * (np.arange(width) + 0.5) / width
    lat = math.pi / 2 - math.pi * (np.arange(height) + 0.5) / height
    return lon, lat


def grid_cell_vectors(width: int, height: int) -> np.ndarray:
    """Unit vectors of all cell centers, shape (height, width, 3)."""
    lon, lat = grid_cell_angles(width, height)
    lon2, lat2 = np.meshgrid(lon, lat)
    return ang_to_vec(lon2, lat2)


def _local_frame(center: np.ndarray) -> np.ndarray:
    """Rotation matrix taking ``center`` to (1, 0, 0) with zero roll."""
    theta, phi = vec_to_ang(center)
    ct, st = math.cos(theta), math.sin(theta)
    cp, sp = math.cos(phi), math.sin(phi)
    rz = np.array([[ct, st, 0.0], [-st, ct, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    return ry @ rz


def fov_mask(center, fov: FovSpec, vectors: np.ndarray) -> np.ndarray:
    """Membership of arbitrary unit vectors in the FoV around ``center``.

    A point belongs to the FoV iff its yaw/pitch offsets in the FoV's local
    (roll-free) frame are within +-h_extent/2 and +-v_extent/2.
    """
    center = np.asarray(center, dtype=float)
    rot = _local_frame(center)
    local = vectors @ rot.T
    yaw = np.arctan2(local[..., 1], local[..., 0])
    pitch = np.arcsin(np.clip(local[..., 2], -1.0, 1.0))
    return (np.abs(yaw) <= fov.h_extent / 2) & (np.abs(pitch) <= fov.v_extent / 2)


def mean_overlap(pred, gt, fov: FovSpec | None = None) -> float:
    """Solid-angle IoU of the two FoVs, rasterized on an equirect grid.

    Cells are weighted by cos(latitude) so each contributes its solid
    angle.  Identical inputs give exactly 1.0; disjoint FoVs give 0.0.
    """
    fov = fov or FovSpec()
    vectors = grid_cell_vectors(fov.grid_w, fov.grid_h)
    mask_p = fov_mask(pred, fov, vectors)
    mask_g = fov_mask(gt, fov, vectors)
    _, lat = grid_cell_angles(fov.grid_w, fov.grid_h)
    weights = np.broadcast_to(np.cos(lat)[:, None], mask_p.shape)
    union = float(np.sum(weights, where=mask_p | mask_g))
    if union == 0.0:
        raise ValueError("FoV rasterized to zero cells; increase grid resolution")
    inter = float(np.sum(weights, where=mask_p & mask_g))
    return inter / union


def tile_labels(center, fov: FovSpec, rows: int, cols: int) -> np.ndarray:
    """Binary tile map: tile = 1 iff it intersects the FoV around center.

    Intersection is decided on the fov rasterization grid; the cell holding
    the FoV center is always counted (the center itself is in the FoV even
    when the FoV is narrower than one grid cell).
    """
    if rows < 1 or cols < 1:
        raise ValueError("tiling must have at least one row and column")
    vectors = grid_cell_vectors(fov.grid_w, fov.grid_h)
    mask = fov_mask(center, fov, vectors)
    theta, phi = vec_to_ang(np.asarray(center, dtype=float))
    c_col = min(int(theta / (2 * math.pi) * fov.grid_w), fov.grid_w - 1)
    c_row = min(int((math.pi / 2 - phi) / math.pi * fov.grid_h), fov.grid_h - 1)
    mask[c_row, c_col] = True
    tile_row = (np.arange(fov.grid_h) * rows) // fov.grid_h
    tile_col = (np.arange(fov.grid_w) * cols) // fov.grid_w
    idx = tile_row[:, None] * cols + tile_col[None, :]
    flat = np.zeros(rows * cols, dtype=bool)
    np.logical_or.at(flat, idx.ravel(), mask.ravel())
    return flat.reshape(rows, cols)


def tile_iou(pred, gt, fov: FovSpec | None = None, tiling: Tuple[int, int] = (12, 6)) -> float:
    """Intersection-over-union of binary tile maps for the two FoVs."""
    fov = fov or FovSpec()
    rows, cols = tiling
    lp = tile_labels(pred, fov, rows, cols)
    lg = tile_labels(gt, fov, rows, cols)
    union = int(np.sum(lp | lg))
    inter = int(np.sum(lp & lg))
    return inter / union
