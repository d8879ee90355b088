"""Attention maps on the equirectangular grid, their peaks, and file IO.

A map is a float32 array of shape (height, width) over the grid convention
of :mod:`hmb.sphere`: row 0 at the north edge, cell centers offset half a
cell.  Ground-truth-style maps place a radial-basis bump at each viewer's
direction::

    value(cell) = exp(-D(cell_center, position)^2 / (2 * sigma^2))

with orthodromic D and sigma = 6 degrees by default; a video's map is the
per-cell mean over its users.  Sequences are stored in a small binary
container (magic ``SALM``) that round-trips bit-exactly.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import sphere
from .dataset import DEFAULT_DT, Dataset

__all__ = [
    "SIGMA_DEFAULT",
    "GRID_DEFAULT",
    "Peak",
    "SaliencySequence",
    "gt_saliency_user",
    "gt_saliency_video",
    "render_sequence",
    "gt_saliency_sequence",
    "extract_peaks",
    "saliency_entropy",
    "standardize",
    "save_saliency",
    "load_saliency",
]

SIGMA_DEFAULT = math.radians(6.0)
GRID_DEFAULT = (256, 256)  # (height, width)

_MAGIC = b"SALM"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIId")


@dataclass
class SaliencySequence:
    """A time series of maps for one video, one frame per trace step."""

    maps: np.ndarray  # (n_frames, height, width) float32
    dt: float = DEFAULT_DT

    def __post_init__(self) -> None:
        self.maps = np.asarray(self.maps, dtype=np.float32)
        if self.maps.ndim != 3:
            raise ValueError("maps must have shape (n_frames, height, width)")
        if len(self.maps) == 0:
            raise ValueError("sequence must contain at least one frame")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def n_frames(self) -> int:
        return len(self.maps)


@dataclass(frozen=True)
class Peak:
    """A local attention maximum surviving non-maximum suppression."""

    position: np.ndarray  # (3,) unit vector of the cell center
    value: float
    rank: int  # 0 = strongest
    cell: Tuple[int, int]


@functools.lru_cache(maxsize=8)
def _cell_vectors(height: int, width: int) -> np.ndarray:
    return sphere.grid_cell_vectors(width, height).reshape(height * width, 3)


@functools.lru_cache(maxsize=8)
def _cell_weights(height: int, width: int) -> np.ndarray:
    _, lat = sphere.grid_cell_angles(width, height)
    return np.repeat(np.cos(lat), width)


def _bump_values(
    positions: np.ndarray, weights: Optional[np.ndarray], height: int, width: int, sigma: float
) -> np.ndarray:
    """Weighted mean of RBF bumps at ``positions``, shape (height, width)."""
    cells = _cell_vectors(height, width)
    dots = np.clip(cells @ positions.T, -1.0, 1.0)
    d = np.arccos(dots)
    bumps = np.exp(-(d**2) / (2.0 * sigma * sigma))
    if weights is None:
        out = bumps.mean(axis=1)
    else:
        out = bumps @ (weights / weights.sum())
    return out.astype(np.float32).reshape(height, width)


def gt_saliency_user(
    position, grid: Tuple[int, int] = GRID_DEFAULT, sigma: float = SIGMA_DEFAULT
) -> np.ndarray:
    """Single-viewer map: one RBF bump at the viewing direction."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    position = np.asarray(position, dtype=float).reshape(1, 3)
    return _bump_values(position, None, grid[0], grid[1], sigma)


def gt_saliency_video(
    positions: Sequence[np.ndarray],
    grid: Tuple[int, int] = GRID_DEFAULT,
    sigma: float = SIGMA_DEFAULT,
) -> np.ndarray:
    """Mean single-viewer map over the users watching one frame."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 3)
    if len(pos) == 0:
        raise ValueError("need at least one viewer position")
    return _bump_values(pos, None, grid[0], grid[1], sigma)


def render_sequence(
    sources: np.ndarray,
    weights: Optional[np.ndarray] = None,
    grid: Tuple[int, int] = GRID_DEFAULT,
    sigma: float = SIGMA_DEFAULT,
    dt: float = DEFAULT_DT,
) -> SaliencySequence:
    """Render per-frame bump sources (n_frames, n_sources, 3) to maps."""
    sources = np.asarray(sources, dtype=float)
    frames = np.stack(
        [_bump_values(sources[t], weights, grid[0], grid[1], sigma) for t in range(len(sources))]
    )
    return SaliencySequence(frames, dt)


def gt_saliency_sequence(
    dataset: Dataset,
    video_id: str,
    grid: Tuple[int, int] = GRID_DEFAULT,
    sigma: float = SIGMA_DEFAULT,
) -> SaliencySequence:
    """Ground-truth maps of one video: mean over its users, every step."""
    traces = [tr for tr in dataset.traces_for() if tr.video_id == video_id]
    if not traces:
        raise ValueError(f"dataset has no traces for video {video_id!r}")
    n = min(tr.n_samples for tr in traces)
    sources = np.stack([tr.samples[:n] for tr in traces], axis=1)  # (n, U, 3)
    return render_sequence(sources, None, grid, sigma, traces[0].dt)


def extract_peaks(
    values: np.ndarray,
    k: int = 5,
    nms_radius: float = math.radians(20.0),
    rel_floor: float = 0.01,
) -> List[Peak]:
    """Up to k greedy maxima, suppressing neighbors within nms_radius.

    The map counts as exhausted once the strongest remaining cell falls
    below ``rel_floor`` times the global maximum: what is left at that
    point is the tail of an already-suppressed bump, not structure, so a
    two-bump map yields exactly two peaks however large k is.  An all-zero
    map gives an empty list; ties resolve to the first cell in row-major
    order.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("expected a single (height, width) map")
    height, width = values.shape
    cells = _cell_vectors(height, width)
    work = values.astype(np.float64).ravel().copy()
    cos_thresh = math.cos(nms_radius)
    floor = rel_floor * float(np.max(work)) if np.max(work) > 0 else 0.0
    peaks: List[Peak] = []
    for rank in range(k):
        idx = int(np.argmax(work))
        val = work[idx]
        if val <= 0.0 or val < floor or not np.isfinite(val):
            break
        center = cells[idx]
        peaks.append(
            Peak(position=center.copy(), value=float(values.ravel()[idx]), rank=rank, cell=(idx // width, idx % width))
        )
        work[cells @ center >= cos_thresh] = -np.inf
    return peaks


def saliency_entropy(values: np.ndarray) -> float:
    """Entropy in bits of the map as a solid-angle-weighted distribution.

    Each cell's probability is its value times the cell's solid angle,
    normalized over the map.  Rejects maps with negative entries or zero
    total mass.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("expected a single (height, width) map")
    if np.any(values < 0):
        raise ValueError("map values must be non-negative")
    height, width = values.shape
    p = values.ravel() * _cell_weights(height, width)
    total = p.sum()
    if total <= 0:
        raise ValueError("map has zero total mass; entropy undefined")
    p = p / total
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def standardize(values: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Per-map mean/std normalization used for network inputs.

    Statistics accumulate in f64 so a constant map maps to exact zeros
    instead of rounding residue amplified by the epsilon guard.
    """
    values = np.asarray(values, dtype=np.float32)
    mean = values.mean(axis=(-2, -1), keepdims=True, dtype=np.float64)
    std = np.sqrt(
        np.mean((values.astype(np.float64) - mean) ** 2, axis=(-2, -1), keepdims=True)
    )
    return ((values - mean) / (std + eps)).astype(np.float32)


def save_saliency(path: str, seq: SaliencySequence) -> None:
    """Write a sequence to the binary container (little-endian, f32)."""
    maps = np.ascontiguousarray(seq.maps, dtype="<f4")
    frames, height, width = maps.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, frames, height, width, seq.dt))
        fh.write(maps.tobytes())


def load_saliency(path: str) -> SaliencySequence:
    """Read a container written by :func:`save_saliency`; bit-exact."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ValueError("truncated header")
        magic, version, frames, height, width, dt = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}; not a saliency container")
        if version != _VERSION:
            raise ValueError(f"unsupported container version {version}")
        if frames == 0 or height == 0 or width == 0:
            raise ValueError("container declares an empty sequence")
        payload = fh.read()
    expected = frames * height * width * 4
    if len(payload) != expected:
        raise ValueError(
            f"payload size {len(payload)} does not match header ({expected} bytes)"
        )
    maps = np.frombuffer(payload, dtype="<f4").reshape(frames, height, width).copy()
    return SaliencySequence(maps, float(dt))
