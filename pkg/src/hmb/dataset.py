"""Viewing-trace ingestion, resampling and window extraction.

Traces are per-(video, user) sequences of unit 3-vectors on a uniform time
grid: sample ``i`` of a :class:`Trace` is the viewing direction at time
``i * dt`` seconds from the video start.  Raw recordings arrive at uneven
rates; :func:`load_traces` reads them from CSV and resamples onto the grid
with spherical linear interpolation, clamping queries outside the recorded
span to the nearest endpoint.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import sphere

__all__ = [
    "DEFAULT_DT",
    "Trace",
    "Dataset",
    "WindowSpec",
    "Window",
    "slerp",
    "resample",
    "load_traces",
    "save_dataset",
    "load_dataset",
    "windows",
    "split_train_test",
]

DEFAULT_DT = 0.2

_FORMATS = ("csv_angles", "csv_xyz")
# Norms inside this band are renormalized silently; anything outside is
# treated as corrupt input.
_NORM_BAND = (0.9, 1.1)


@dataclass
class Trace:
    """One user's viewing directions for one video, on a uniform grid."""

    video_id: str
    user_id: str
    dt: float
    samples: np.ndarray  # (n, 3) unit vectors

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ValueError("samples must have shape (n, 3)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        norms = np.linalg.norm(self.samples, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError(
                f"trace ({self.video_id}, {self.user_id}) has non-unit samples"
            )

    @property
    def n_samples(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return (len(self.samples) - 1) * self.dt


@dataclass
class Dataset:
    """A collection of uniform traces plus per-video durations and split."""

    traces: List[Trace]
    video_durations: Dict[str, float]
    split: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for tr in self.traces:
            dur = self.video_durations.get(tr.video_id)
            if dur is None:
                raise ValueError(f"trace references unknown video {tr.video_id!r}")
            if tr.duration > dur + tr.dt / 2:
                raise ValueError(
                    f"trace ({tr.video_id}, {tr.user_id}) runs {tr.duration:.2f}s, "
                    f"longer than its video ({dur:.2f}s)"
                )
        for vid, label in self.split.items():
            if label not in ("train", "test"):
                raise ValueError(f"bad split label {label!r} for video {vid!r}")

    @property
    def video_ids(self) -> List[str]:
        return sorted(self.video_durations)

    def traces_for(self, subset: str = "all") -> List[Trace]:
        """Traces of one split subset, ordered by (video_id, user_id)."""
        if subset not in ("all", "train", "test"):
            raise ValueError(f"unknown subset {subset!r}")
        out = [
            tr
            for tr in self.traces
            if subset == "all" or self.split.get(tr.video_id) == subset
        ]
        return sorted(out, key=lambda tr: (tr.video_id, tr.user_id))


@dataclass(frozen=True)
class WindowSpec:
    """History/horizon layout for prediction windows.

    ``t_index`` of a window is the last history step; history spans
    ``t_index - m_history + 1 .. t_index`` and the future spans
    ``t_index + 1 .. t_index + horizon``.  Windows start no earlier than
    ``max(t_start, m_history * dt)`` so every window carries full history
    and skips the initial exploration transient.
    """

    m_history: int = 5
    horizon: int = 25
    t_start: float = 6.0
    dt: float = DEFAULT_DT

    def __post_init__(self) -> None:
        if self.m_history < 1 or self.horizon < 1:
            raise ValueError("m_history and horizon must be at least 1")
        if self.dt <= 0 or self.t_start < 0:
            raise ValueError("dt must be positive and t_start non-negative")

    @property
    def first_t_index(self) -> int:
        return max(int(math.ceil(self.t_start / self.dt - 1e-9)), self.m_history)

    def horizon_seconds(self) -> np.ndarray:
        return self.dt * np.arange(1, self.horizon + 1)


@dataclass
class Window:
    """One prediction instance: M history samples and H future targets."""

    video_id: str
    user_id: str
    t_index: int
    history: np.ndarray  # (m_history, 3)
    future: np.ndarray  # (horizon, 3)


def slerp(p: np.ndarray, q: np.ndarray, u) -> np.ndarray:
    """Spherical linear interpolation between unit vectors p and q.

    ``u`` may be scalar or an array; u=0 gives p, u=1 gives q.  Raises for
    antipodal endpoints, where the connecting great circle is ambiguous.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)[..., None]
    dot = float(np.clip(np.dot(p, q), -1.0, 1.0))
    omega = math.acos(dot)
    if omega > math.pi - 1e-9:
        raise ValueError("cannot interpolate between antipodal samples")
    if omega < 1e-9:
        out = p + u * (q - p)
        return out / np.linalg.norm(out, axis=-1, keepdims=True)
    so = math.sin(omega)
    return (np.sin((1.0 - u) * omega) * p + np.sin(u * omega) * q) / so


def resample(timestamps: np.ndarray, positions: np.ndarray, dt: float = DEFAULT_DT) -> np.ndarray:
    """Resample an unevenly-sampled trace onto the uniform k*dt grid.

    The grid runs k = 0 .. floor(t_last / dt); queries before the first or
    after the last recorded sample clamp to the endpoints.  Timestamps must
    be strictly increasing and span at least one dt.
    """
    timestamps = np.asarray(timestamps, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if len(timestamps) != len(positions):
        raise ValueError("timestamps and positions disagree in length")
    if len(timestamps) < 2:
        raise ValueError("need at least two samples to resample")
    if np.any(np.diff(timestamps) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    if timestamps[-1] - timestamps[0] < dt:
        raise ValueError("trace span is shorter than one sample interval")
    n_out = int(math.floor(timestamps[-1] / dt + 1e-9)) + 1
    grid = dt * np.arange(n_out)
    idx = np.searchsorted(timestamps, grid, side="right") - 1
    idx = np.clip(idx, 0, len(timestamps) - 2)
    t0 = timestamps[idx]
    t1 = timestamps[idx + 1]
    u = np.clip((grid - t0) / (t1 - t0), 0.0, 1.0)
    out = np.empty((n_out, 3))
    for k in range(n_out):
        out[k] = slerp(positions[idx[k]], positions[idx[k] + 1], float(u[k]))
    return out


def _parse_row(row: Sequence[str], fmt: str, line_no: int) -> Tuple[str, str, float, np.ndarray]:
    expected = 5 if fmt == "csv_angles" else 6
    if len(row) != expected:
        raise ValueError(f"row {line_no}: expected {expected} fields, got {len(row)}")
    try:
        video_id, user_id = row[0], row[1]
        t = float(row[2])
        values = [float(x) for x in row[3:]]
    except ValueError as exc:
        raise ValueError(f"row {line_no}: {exc}") from None
    if fmt == "csv_angles":
        theta, phi = values
        if abs(phi) > math.pi / 2 + 1e-9:
            raise ValueError(f"row {line_no}: latitude {phi} outside [-pi/2, pi/2]")
        vec = sphere.ang_to_vec(theta % (2 * math.pi), phi)
    else:
        vec = np.array(values)
        norm = float(np.linalg.norm(vec))
        if not (_NORM_BAND[0] <= norm <= _NORM_BAND[1]):
            raise ValueError(f"row {line_no}: vector norm {norm:.4f} outside {_NORM_BAND}")
        vec = vec / norm
    return video_id, user_id, t, vec


def load_traces(
    path: str,
    fmt: str = "csv_angles",
    dt: float = DEFAULT_DT,
    video_durations: Optional[Dict[str, float]] = None,
) -> Dataset:
    """Read raw trace CSV and resample every (video, user) series onto dt.

    Formats: ``csv_angles`` with header
    ``video_id,user_id,timestamp_s,theta_rad,phi_rad`` and ``csv_xyz`` with
    ``video_id,user_id,timestamp_s,x,y,z``.  Errors name the offending CSV
    row.  Video durations default to each video's longest resampled trace.
    """
    if fmt not in _FORMATS:
        raise ValueError(f"unknown trace format {fmt!r}; expected one of {_FORMATS}")
    series: Dict[Tuple[str, str], List[Tuple[float, np.ndarray]]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError("empty trace file")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            video_id, user_id, t, vec = _parse_row(row, fmt, line_no)
            series.setdefault((video_id, user_id), []).append((t, vec))
    if not series:
        raise ValueError("trace file contains no data rows")
    traces = []
    for (video_id, user_id), rows in sorted(series.items()):
        ts = np.array([t for t, _ in rows])
        if np.any(np.diff(ts) <= 0):
            raise ValueError(
                f"timestamps for ({video_id}, {user_id}) are not strictly increasing"
            )
        pos = np.stack([v for _, v in rows])
        traces.append(Trace(video_id, user_id, dt, resample(ts, pos, dt)))
    durations = dict(video_durations or {})
    for tr in traces:
        durations[tr.video_id] = max(durations.get(tr.video_id, 0.0), tr.duration)
    return Dataset(traces, durations)


def save_dataset(dataset: Dataset, out_dir: str) -> None:
    """Write a dataset as canonical csv_angles plus a JSON manifest."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "traces.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "user_id", "timestamp_s", "theta_rad", "phi_rad"])
        for tr in sorted(dataset.traces, key=lambda t: (t.video_id, t.user_id)):
            theta, phi = sphere.vec_to_ang(tr.samples)
            for i in range(tr.n_samples):
                writer.writerow(
                    [tr.video_id, tr.user_id, f"{i * tr.dt:.6f}", repr(float(theta[i])), repr(float(phi[i]))]
                )
    manifest = {
        "dt": dataset.traces[0].dt if dataset.traces else DEFAULT_DT,
        "video_durations": {k: dataset.video_durations[k] for k in sorted(dataset.video_durations)},
        "split": {k: dataset.split[k] for k in sorted(dataset.split)},
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(in_dir: str) -> Dataset:
    """Load a dataset previously written by :func:`save_dataset`."""
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    ds = load_traces(
        os.path.join(in_dir, "traces.csv"),
        fmt="csv_angles",
        dt=float(manifest["dt"]),
        video_durations=manifest.get("video_durations"),
    )
    return replace(ds, split=dict(manifest.get("split", {})))


def windows(dataset: Dataset, spec: Optional[WindowSpec] = None, subset: str = "all") -> List[Window]:
    """All prediction windows of a subset, ordered by (video, user, t).

    A trace yields a window for every t_index from
    ``max(ceil(t_start/dt), m_history)`` through ``n - 1 - horizon``; traces
    too short for the horizon yield none.
    """
    spec = spec or WindowSpec()
    out: List[Window] = []
    for tr in dataset.traces_for(subset):
        if abs(tr.dt - spec.dt) > 1e-12:
            raise ValueError(
                f"trace dt {tr.dt} does not match window spec dt {spec.dt}"
            )
        for t in range(spec.first_t_index, tr.n_samples - spec.horizon):
            out.append(
                Window(
                    video_id=tr.video_id,
                    user_id=tr.user_id,
                    t_index=t,
                    history=tr.samples[t - spec.m_history + 1 : t + 1],
                    future=tr.samples[t + 1 : t + 1 + spec.horizon],
                )
            )
    return out


def split_train_test(dataset: Dataset, test_video_ids: Iterable[str]) -> Dataset:
    """Assign whole videos to the test split, the rest to train."""
    test_ids = sorted(set(test_video_ids))
    if not test_ids:
        raise ValueError("test video list is empty")
    unknown = [v for v in test_ids if v not in dataset.video_durations]
    if unknown:
        raise ValueError(f"unknown test video ids: {unknown}")
    split = {
        vid: ("test" if vid in test_ids else "train") for vid in dataset.video_durations
    }
    return replace(dataset, split=split)
