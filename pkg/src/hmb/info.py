"""Predictability analyses over viewing traces: how much a position at
time t tells about the position s seconds later, and how much the video's
attention maps add on top of that.

Positions are discretized with an equal-area latitude-band partition of
the sphere, map values with a uniform partition of [0, 1].  All entropies
are plug-in (maximum-likelihood) estimates in bits, with no bias
correction: small-sample estimates of mutual information bias upward and
conditional differences can dip slightly below zero, which is why the
transfer estimate is clamped at 0.
"""

import math
from typing import Dict, Optional, Tuple

import numpy as np

from .dataset import Dataset
from .sphere import vec_to_ang

__all__ = [
    "SphericalBinner",
    "ScalarBinner",
    "entropy_of",
    "mutual_information_from_joint",
    "mutual_information",
    "transfer_entropy",
]


class SphericalBinner:
    """Equal-area partition of the sphere into latitude-band cells.

    Latitude rings get cell counts proportional to their circumference
    (largest-remainder rounding), and the ring z-boundaries are then
    placed so every cell ends up with solid angle exactly 4*pi/n_bins.
    """

    def __init__(self, n_bins: int = 128):
        if n_bins < 1:
            raise ValueError("n_bins must be at least 1")
        self.n_bins = n_bins
        n_rings = max(1, round(math.sqrt(n_bins * math.pi) / 2))
        centers = math.pi * (np.arange(n_rings) + 0.5) / n_rings
        quota = n_bins * np.sin(centers) / np.sin(centers).sum()
        counts = np.floor(quota).astype(int)
        frac = quota - counts
        # hand out the leftover cells by largest remainder, ties north-first
        order = np.lexsort((np.arange(n_rings), -frac))
        for i in order[: n_bins - counts.sum()]:
            counts[i] += 1
        while np.any(counts == 0):
            counts[int(np.argmin(counts))] += 1
            counts[int(np.argmax(counts))] -= 1
        self.ring_counts = counts
        self.ring_offsets = np.concatenate([[0], np.cumsum(counts)])
        self.ring_z = 1.0 - 2.0 * self.ring_offsets / n_bins  # 1 .. -1

    def bin(self, v: np.ndarray) -> np.ndarray:
        """Bin indices in [0, n_bins) for unit vectors of shape (..., 3)."""
        v = np.asarray(v, dtype=float)
        z = np.clip(v[..., 2], -1.0, 1.0)
        frac = (1.0 - z) / 2.0
        interior = self.ring_offsets[1:-1] / self.n_bins
        ring = np.searchsorted(interior, frac, side="right")
        theta = np.mod(np.arctan2(v[..., 1], v[..., 0]), 2.0 * math.pi)
        counts = self.ring_counts[ring]
        col = np.minimum(
            (theta / (2.0 * math.pi) * counts).astype(int), counts - 1)
        return self.ring_offsets[ring] + col

    def solid_angles(self) -> np.ndarray:
        """Per-bin solid angle, shape (n_bins,)."""
        ring_area = 2.0 * math.pi * (self.ring_z[:-1] - self.ring_z[1:])
        return np.repeat(ring_area / self.ring_counts, self.ring_counts)


class ScalarBinner:
    """Uniform partition of [0, 1]; boundaries go to the lower bin."""

    def __init__(self, n_bins: int = 256):
        if n_bins < 1:
            raise ValueError("n_bins must be at least 1")
        self.n_bins = n_bins

    def bin(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("values must lie in [0, 1]")
        idx = np.ceil(v * self.n_bins).astype(int) - 1
        return np.clip(idx, 0, self.n_bins - 1)


def entropy_of(histogram) -> float:
    """Plug-in Shannon entropy of a count histogram, in bits."""
    counts = np.asarray(histogram, dtype=np.float64).ravel()
    if np.any(counts < 0):
        raise ValueError("histogram counts must be nonnegative")
    # sorting first makes the result independent of histogram layout, so
    # e.g. transposing a joint histogram cannot shift the value by an ulp
    pos = np.sort(counts[counts > 0])
    total = pos.sum()
    if total <= 0:
        raise ValueError("histogram has zero total")
    p = pos / total
    return float(-(p * np.log2(p)).sum())


def mutual_information_from_joint(joint: np.ndarray) -> float:
    """Plug-in mutual information of a 2-d joint count histogram, in bits.

    Computed as H(A) + H(B) - H(A, B), which makes symmetry and the
    bounds 0 <= I <= min(H(A), H(B)) exact estimator identities.
    """
    joint = np.asarray(joint, dtype=np.float64)
    if joint.ndim != 2:
        raise ValueError("joint histogram must be 2-d")
    return (entropy_of(joint.sum(axis=1)) + entropy_of(joint.sum(axis=0))
            - entropy_of(joint))


def _lag_steps(dt: float, s: float) -> int:
    k = round(s / dt)
    if abs(k * dt - s) > 1e-6:
        raise ValueError(f"lag {s} s is not a multiple of the {dt} s step")
    if k < 0:
        raise ValueError("lag must be nonnegative")
    return k


def _first_index(dt: float, t_start: float) -> int:
    return max(int(math.ceil(t_start / dt - 1e-9)), 0)


def mutual_information(dataset: Dataset, s: float,
                       binner: Optional[SphericalBinner] = None,
                       normalize: bool = True,
                       t_start: float = 6.0
                       ) -> Tuple[Dict[str, float], float]:
    """I(P_t; P_{t+s}) per video, pooled over users and t >= t_start.

    Returns (per-video values, their mean).  With normalize the value is
    divided by the plug-in entropy of P_t, giving a 0..1 predictability
    score; a video whose pooled P_t has zero entropy scores 1 by
    convention (nothing left to predict).
    """
    binner = binner or SphericalBinner()
    per_video: Dict[str, float] = {}
    for vid in dataset.video_ids:
        joint = np.zeros((binner.n_bins, binner.n_bins))
        for tr in dataset.traces_for():
            if tr.video_id != vid:
                continue
            k = _lag_steps(tr.dt, s)
            first = _first_index(tr.dt, t_start)
            if tr.n_samples - k <= first:
                continue
            ia = binner.bin(tr.samples[first:tr.n_samples - k])
            ib = binner.bin(tr.samples[first + k:])
            np.add.at(joint, (ia, ib), 1.0)
        if joint.sum() <= 0:
            raise ValueError(
                f"no valid pairs for video {vid!r} at lag {s} s")
        mi = mutual_information_from_joint(joint)
        if normalize:
            h = entropy_of(joint.sum(axis=1))
            mi = 1.0 if h <= 0 else mi / h
        per_video[vid] = mi
    return per_video, float(np.mean(list(per_video.values())))


def _grid_cells(samples: np.ndarray, height: int,
                width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Equirectangular (row, col) of each unit vector; row 0 northmost."""
    theta, phi = vec_to_ang(samples)
    rows = np.minimum(((math.pi / 2 - phi) / math.pi * height).astype(int),
                      height - 1)
    cols = np.minimum((theta / (2 * math.pi) * width).astype(int),
                      width - 1)
    return rows, cols


def _entropy_of_codes(codes: np.ndarray) -> float:
    return entropy_of(np.unique(codes, return_counts=True)[1])


def transfer_entropy(dataset: Dataset, saliency: Dict[str, object],
                     s: float,
                     pos_binner: Optional[SphericalBinner] = None,
                     sal_binner: Optional[ScalarBinner] = None,
                     mode: str = "value",
                     t_start: float = 6.0
                     ) -> Tuple[Dict[str, float], float]:
    """TE from the video's maps to the viewer, H(P'|P) - H(P'|P,V), per
    video and averaged; P = P_t, P' = P_{t+s}, V drawn from the map at
    t+s.

    mode "value" takes the map value at the grid cell under P_{t+s},
    scaled by the frame maximum and quantized by sal_binner; "argmax"
    takes the flat index of the frame's strongest cell.  Negative plug-in
    differences clamp to 0.
    """
    if mode not in ("value", "argmax"):
        raise ValueError(f"unknown scalarization mode {mode!r}")
    pos_binner = pos_binner or SphericalBinner()
    sal_binner = sal_binner or ScalarBinner()
    n_pos = pos_binner.n_bins
    per_video: Dict[str, float] = {}
    for vid in dataset.video_ids:
        seq = saliency.get(vid)
        if seq is None:
            raise ValueError(f"no saliency for video {vid!r}")
        maps = np.asarray(seq.maps, dtype=np.float64)
        height, width = maps.shape[1:]
        if mode == "value":
            peak = maps.reshape(len(maps), -1).max(axis=1)
            scaled = maps / np.where(peak > 0, peak, 1.0)[:, None, None]
        else:
            frame_argmax = maps.reshape(len(maps), -1).argmax(axis=1)
        ias, ibs, ivs = [], [], []
        for tr in dataset.traces_for():
            if tr.video_id != vid:
                continue
            if abs(tr.dt - seq.dt) > 1e-9:
                raise ValueError(
                    f"saliency dt {seq.dt} does not match trace dt "
                    f"{tr.dt} for video {vid!r}")
            k = _lag_steps(tr.dt, s)
            first = _first_index(tr.dt, t_start)
            if tr.n_samples - k <= first:
                continue
            if tr.n_samples > len(maps):
                raise ValueError(
                    f"saliency for video {vid!r} does not cover "
                    f"{tr.n_samples} samples")
            t = np.arange(first, tr.n_samples - k)
            p_now = tr.samples[t]
            p_fut = tr.samples[t + k]
            ias.append(pos_binner.bin(p_now))
            ibs.append(pos_binner.bin(p_fut))
            if mode == "value":
                rows, cols = _grid_cells(p_fut, height, width)
                ivs.append(sal_binner.bin(scaled[t + k, rows, cols]))
            else:
                ivs.append(frame_argmax[t + k])
        if not ias:
            raise ValueError(
                f"no valid pairs for video {vid!r} at lag {s} s")
        ia = np.concatenate(ias).astype(np.int64)
        ib = np.concatenate(ibs).astype(np.int64)
        iv = np.concatenate(ivs).astype(np.int64)
        pair = ia * n_pos + ib
        n_sym = int(iv.max()) + 1
        h_p = _entropy_of_codes(ia)
        h_pp = _entropy_of_codes(pair)
        h_pv = _entropy_of_codes(ia * n_sym + iv)
        h_ppv = _entropy_of_codes(pair * n_sym + iv)
        te = (h_pp - h_p) - (h_ppv - h_pv)
        per_video[vid] = max(te, 0.0)
    return per_video, float(np.mean(list(per_video.values())))
