"""Synthetic viewing-trace corpora with controllable attention structure.

Four trace families, all deterministic given a seed and C0-continuous on
the sphere:

* ``exploration``: independent smooth random walks (Ornstein-Uhlenbeck
  tangent velocity), no shared attractor.
* ``static_focus``: users drift from random starts and converge onto one
  fixed region of interest within a couple of seconds, then hold with
  small jitter.  Optional excursion "kicks" send users away from the RoI
  for a moment before they are pulled back (off by default).
* ``moving_focus``: the RoI travels a great circle at constant angular
  speed; users pursue it with a short lag.
* ``ride``: every user drifts in the same longitude direction at constant
  speed at their own latitude, as if carried by the camera.

Each video also carries per-frame bump sources (user positions plus, for
RoI kinds, the RoI itself with extra weight) from which attention maps can
be rendered; see :mod:`hmb.saliency`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dataset import DEFAULT_DT, Dataset, Trace

__all__ = ["KINDS", "SynthConfig", "SynthVideo", "synth_generate"]

KINDS = ("exploration", "static_focus", "moving_focus", "ride")

# Per-kind defaults for the motion parameters whose meaning is shared:
# speed_deg_s is the rms wander speed (exploration) or the attractor/drift
# speed (moving_focus, ride); jitter is the OU wobble every kind carries.
_KIND_DEFAULTS = {
    "exploration": dict(speed_deg_s=30.0, jitter_tau_s=1.5),
    "static_focus": dict(speed_deg_s=0.0),
    "moving_focus": dict(speed_deg_s=12.0),
    "ride": dict(speed_deg_s=15.0),
}


@dataclass(frozen=True)
class SynthConfig:
    kind: str = "exploration"
    n_videos: int = 4
    n_users: int = 10
    duration_s: float = 60.0
    dt: float = DEFAULT_DT
    seed: int = 0
    jitter_deg_s: float = 6.0  # rms jitter speed
    jitter_tau_s: float = 1.0  # OU relaxation time
    converge_tau_s: float = 0.8  # attractor pursuit time constant
    speed_deg_s: float = 30.0
    kick_rate_hz: float = 0.0  # excursions per second per user
    kick_max_deg: float = 35.0
    kick_hold_s: float = 1.2
    roi_weight: float = 2.0  # bump weight of the RoI relative to one user

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; expected one of {KINDS}")
        if self.n_videos < 1 or self.n_users < 1:
            raise ValueError("need at least one video and one user")
        if self.duration_s < self.dt:
            raise ValueError("duration must cover at least one step")


@dataclass
class SynthVideo:
    """Per-frame attention bump sources for one synthetic video."""

    video_id: str
    kind: str
    sources: np.ndarray  # (n_frames, n_sources, 3) unit vectors
    weights: np.ndarray  # (n_sources,) relative bump weights


def _tangent_noise(rng: np.random.Generator, p: np.ndarray) -> np.ndarray:
    g = rng.normal(size=3)
    g -= np.dot(g, p) * p
    n = np.linalg.norm(g)
    return g / n if n > 1e-12 else np.zeros(3)


def _geodesic_step(p: np.ndarray, v: np.ndarray, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """Advance p along tangent velocity v (rad/s) and transport v."""
    speed = np.linalg.norm(v)
    if speed < 1e-12:
        return p, v
    # Keep every step well under pi/4 so traces are continuous even for
    # extreme velocity draws.
    ang = min(speed * dt, 0.9 * math.pi / 4)
    d = v / speed
    p_new = p * math.cos(ang) + d * math.sin(ang)
    p_new /= np.linalg.norm(p_new)
    v_new = v - np.dot(v, p_new) * p_new
    n = np.linalg.norm(v_new)
    if n > 1e-12:
        v_new *= speed / n
    return p_new, v_new


def _pull_toward(p: np.ndarray, target: np.ndarray, frac: float) -> np.ndarray:
    """Move a fraction of the remaining great-circle arc toward target."""
    dot = float(np.clip(np.dot(p, target), -1.0, 1.0))
    omega = math.acos(dot)
    if omega < 1e-9:
        return target.copy()
    if omega > math.pi - 1e-6:
        # Antipodal start: nudge off the axis deterministically.
        fallback = np.array([1.0, 0.0, 0.0]) if abs(p[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(p, fallback)
        axis /= np.linalg.norm(axis)
        tangent = np.cross(axis, p)
        p = p * math.cos(1e-3) + tangent * math.sin(1e-3)
        return _pull_toward(p / np.linalg.norm(p), target, frac)
    u = frac
    so = math.sin(omega)
    out = (math.sin((1.0 - u) * omega) * p + math.sin(u * omega) * target) / so
    return out / np.linalg.norm(out)


def _random_point(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _rotate_about(p: np.ndarray, axis: np.ndarray, ang: float) -> np.ndarray:
    c, s = math.cos(ang), math.sin(ang)
    return p * c + np.cross(axis, p) * s + axis * np.dot(axis, p) * (1.0 - c)


def _ou_update(v: np.ndarray, p: np.ndarray, rng: np.random.Generator, sigma: float, tau: float, dt: float) -> np.ndarray:
    alpha = math.exp(-dt / tau)
    v = alpha * v + sigma * math.sqrt(1.0 - alpha * alpha) * _tangent_noise(rng, p)
    v -= np.dot(v, p) * p
    return v


def _simulate_user(cfg: SynthConfig, rng: np.random.Generator, roi_path: Optional[np.ndarray], base_path: Optional[np.ndarray], n: int) -> np.ndarray:
    sigma = math.radians(cfg.jitter_deg_s)
    p = _random_point(rng)
    speed0 = math.radians(cfg.speed_deg_s) if cfg.kind == "exploration" else sigma
    v = speed0 * _tangent_noise(rng, p)
    frac = 1.0 - math.exp(-cfg.dt / cfg.converge_tau_s)
    kick_until = -1
    kick_target: Optional[np.ndarray] = None
    out = np.empty((n, 3))
    for t in range(n):
        if cfg.kind == "exploration":
            v = _ou_update(v, p, rng, math.radians(cfg.speed_deg_s), cfg.jitter_tau_s, cfg.dt)
            p, v = _geodesic_step(p, v, cfg.dt)
        else:
            target = base_path[t] if base_path is not None else roi_path[t]
            if cfg.kick_rate_hz > 0.0:
                if t >= kick_until and rng.random() < cfg.kick_rate_hz * cfg.dt:
                    offset = math.radians(cfg.kick_max_deg) * (0.4 + 0.6 * rng.random())
                    kick_target = _rotate_about(target, _tangent_noise(rng, target), offset)
                    kick_target /= np.linalg.norm(kick_target)
                    kick_until = t + max(1, int(round(cfg.kick_hold_s / cfg.dt)))
                if t < kick_until and kick_target is not None:
                    target = kick_target
            p = _pull_toward(p, target, frac)
            v = _ou_update(v, p, rng, sigma, cfg.jitter_tau_s, cfg.dt)
            p, v = _geodesic_step(p, v, cfg.dt)
        out[t] = p
    return out


def synth_generate(
    kind: str = "exploration",
    n_videos: int = 4,
    n_users: int = 10,
    duration_s: float = 60.0,
    seed: int = 0,
    config: Optional[SynthConfig] = None,
    **overrides,
) -> Tuple[Dataset, Dict[str, SynthVideo], dict]:
    """Generate a synthetic dataset of one kind.

    Returns (dataset, per-video bump sources, manifest).  The manifest
    records the full configuration so a run can be reproduced; two calls
    with the same arguments produce bit-identical traces.
    """
    if config is None:
        params = dict(_KIND_DEFAULTS.get(kind, {}))
        params.update(overrides)
        config = SynthConfig(
            kind=kind,
            n_videos=n_videos,
            n_users=n_users,
            duration_s=duration_s,
            seed=seed,
            **params,
        )
    cfg = config
    n = int(math.floor(cfg.duration_s / cfg.dt + 1e-9)) + 1
    root = np.random.SeedSequence(cfg.seed)
    video_seeds = root.spawn(cfg.n_videos)
    traces: List[Trace] = []
    videos: Dict[str, SynthVideo] = {}
    durations: Dict[str, float] = {}
    for vi in range(cfg.n_videos):
        video_id = f"{cfg.kind}_{vi:02d}"
        vid_seq = video_seeds[vi]
        vid_rng = np.random.default_rng(vid_seq)
        roi_path = None
        base_paths = None
        if cfg.kind == "static_focus":
            roi = _random_point(vid_rng)
            roi_path = np.broadcast_to(roi, (n, 3)).copy()
        elif cfg.kind == "moving_focus":
            start = _random_point(vid_rng)
            axis = _tangent_noise(vid_rng, start)
            axis = np.cross(start, axis)
            axis /= np.linalg.norm(axis)
            omega = math.radians(cfg.speed_deg_s)
            roi_path = np.stack(
                [_rotate_about(start, axis, omega * t * cfg.dt) for t in range(n)]
            )
        elif cfg.kind == "ride":
            omega = math.radians(cfg.speed_deg_s)
            base_paths = []
            for uj in range(cfg.n_users):
                theta0 = vid_rng.uniform(0.0, 2 * math.pi)
                phi_u = vid_rng.uniform(-0.35 * math.pi, 0.35 * math.pi)
                ts = np.arange(n) * cfg.dt
                lon = theta0 + omega * ts
                base_paths.append(
                    np.stack(
                        [np.cos(lon) * math.cos(phi_u), np.sin(lon) * math.cos(phi_u), np.full(n, math.sin(phi_u))],
                        axis=-1,
                    )
                )
        user_seeds = vid_seq.spawn(cfg.n_users)
        user_positions = []
        for uj in range(cfg.n_users):
            u_rng = np.random.default_rng(user_seeds[uj])
            base = base_paths[uj] if base_paths is not None else None
            pos = _simulate_user(cfg, u_rng, roi_path, base, n)
            user_positions.append(pos)
            traces.append(Trace(video_id, f"user{uj:02d}", cfg.dt, pos))
        durations[video_id] = (n - 1) * cfg.dt
        stack = [np.stack(user_positions, axis=1)]  # (n, U, 3)
        weights = [np.ones(cfg.n_users)]
        if roi_path is not None and cfg.roi_weight > 0:
            stack.append(roi_path[:, None, :])
            weights.append(np.array([cfg.roi_weight]))
        videos[video_id] = SynthVideo(
            video_id=video_id,
            kind=cfg.kind,
            sources=np.concatenate(stack, axis=1),
            weights=np.concatenate(weights),
        )
    manifest = {
        "generator": "synth",
        "config": asdict(cfg),
        "video_ids": sorted(videos),
        "n_frames": n,
    }
    return Dataset(traces, durations), videos, manifest
