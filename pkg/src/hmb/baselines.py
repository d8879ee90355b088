"""Reference predictors: no-motion, saliency-peak chasing, and the trained
sequence models behind one common interface.

A predictor maps (history positions, optional per-step saliency, horizon)
to H unit vectors.  The K-saliency baseline picks, at every future step,
whichever of the K strongest map peaks lies closest to the last known
position; its per-K error curves combine into a lower-bound envelope via a
pointwise minimum.
"""

from typing import Dict, List, Optional, Sequence

import numpy as np

from . import saliency as sal_mod
from .models import Seq2SeqModel
from .sphere import orthodromic_distance

__all__ = [
    "trivial_static",
    "k_saliency_predict",
    "saliency_only_error_envelope",
    "StaticPredictor",
    "KSaliencyPredictor",
    "ModelPredictor",
    "predictor_from_name",
    "PREDICTOR_BASE_NAMES",
]


def trivial_static(history: np.ndarray, horizon: int) -> np.ndarray:
    """No-motion baseline: repeat the last known position H times."""
    history = np.asarray(history, dtype=float)
    if history.ndim != 2 or history.shape[0] == 0 or history.shape[1] != 3:
        raise ValueError("history must be a non-empty (m, 3) array")
    return np.tile(history[-1], (horizon, 1))


def k_saliency_predict(p_t: np.ndarray, peaks_per_step: Sequence[Sequence],
                       k: int) -> np.ndarray:
    """Chase the nearest of the K strongest peaks, step by step.

    peaks_per_step: for each future step, peaks ordered strongest first.
    Among the top k, the one closest to p_t wins; exact distance ties go to
    the stronger peak.  A step with no peaks falls back to p_t.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    p_t = np.asarray(p_t, dtype=float)
    out = np.empty((len(peaks_per_step), 3))
    for i, peaks in enumerate(peaks_per_step):
        top = peaks[:k]
        if len(top) == 0:
            out[i] = p_t
            continue
        positions = np.stack([np.asarray(p.position, dtype=float)
                              for p in top])
        dists = orthodromic_distance(positions, p_t[None, :])
        # argmin returns the first minimum: strongest-first order makes
        # that the lower rank number on ties
        out[i] = positions[int(np.argmin(dists))]
    return out


def saliency_only_error_envelope(per_k_curves: Dict[int, np.ndarray],
                                 kappa: int = 5) -> np.ndarray:
    """Pointwise minimum of the K=1..kappa error curves.

    This is a lower bound on saliency-only prediction error, not a
    realizable predictor: the minimizing K varies with the step.
    """
    missing = [k for k in range(1, kappa + 1) if k not in per_k_curves]
    if missing:
        raise ValueError(f"missing error curves for K={missing}")
    curves = [np.asarray(per_k_curves[k], dtype=float)
              for k in range(1, kappa + 1)]
    length = {c.shape for c in curves}
    if len(length) != 1:
        raise ValueError("error curves must share one step grid")
    return np.min(np.stack(curves), axis=0)


class StaticPredictor:
    """No-motion baseline behind the predictor interface."""

    name = "static"

    def predict(self, history, saliency_future=None,
                horizon: int = 25) -> np.ndarray:
        return trivial_static(history, horizon)


class KSaliencyPredictor:
    """Nearest-of-top-K peak chaser.

    predict accepts either a (steps, h, w) map array (peaks are extracted
    per step) or an already-extracted list of per-step peak lists, which
    evaluation precomputes once per video frame.
    """

    def __init__(self, k: int, nms_radius: Optional[float] = None):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.k = k
        self.name = f"k-sal:{k}"
        self.nms_radius = nms_radius

    def _peaks(self, saliency_future, horizon):
        if saliency_future is None:
            raise ValueError(f"{self.name} requires future saliency")
        if isinstance(saliency_future, np.ndarray):
            if saliency_future.ndim != 3:
                raise ValueError("saliency maps must be (steps, h, w)")
            kwargs = {}
            if self.nms_radius is not None:
                kwargs["nms_radius"] = self.nms_radius
            return [sal_mod.extract_peaks(frame, self.k, **kwargs)
                    for frame in saliency_future[:horizon]]
        return list(saliency_future)[:horizon]

    def predict(self, history, saliency_future=None,
                horizon: int = 25) -> np.ndarray:
        history = np.asarray(history, dtype=float)
        peaks = self._peaks(saliency_future, horizon)
        if len(peaks) < horizon:
            raise ValueError(
                f"need peaks for {horizon} steps, got {len(peaks)}")
        return k_saliency_predict(history[-1], peaks, self.k)


class ModelPredictor:
    """A trained seq2seq network behind the predictor interface."""

    def __init__(self, model: Seq2SeqModel):
        if not model.trained:
            raise ValueError(f"model {model.kind!r} is untrained")
        self.model = model
        self.name = model.kind

    def predict(self, history, saliency_future=None,
                horizon: int = 25) -> np.ndarray:
        history = np.asarray(history, dtype=float)
        maps = None
        if self.model.uses_saliency:
            if saliency_future is None:
                raise ValueError(f"{self.name} requires saliency maps")
            maps = np.asarray(saliency_future)[None, ...]
        return self.model.predict_batch(history[None, ...], maps,
                                        horizon)[0]


PREDICTOR_BASE_NAMES = (
    "static", "pos-only", "k-sal:K", "track", "cvpr18i", "mm18i",
    "track-ablat-sal", "track-ablat-fuse",
)


def predictor_from_name(name: str,
                        trained_models: Optional[Dict[str, Seq2SeqModel]]
                        = None):
    """Resolve a CLI predictor name.

    Model-backed names need the matching trained network in
    trained_models, keyed by kind.
    """
    if name == "static":
        return StaticPredictor()
    if name.startswith("k-sal:"):
        try:
            k = int(name.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad K in predictor name {name!r}") from None
        return KSaliencyPredictor(k)
    model_kinds = ("pos-only", "track", "cvpr18i", "mm18i",
                   "track-ablat-sal", "track-ablat-fuse")
    if name in model_kinds:
        if trained_models is None or name not in trained_models:
            raise ValueError(f"predictor {name!r} needs a trained model")
        return ModelPredictor(trained_models[name])
    raise ValueError(
        f"unknown predictor {name!r}; expected one of "
        f"{', '.join(PREDICTOR_BASE_NAMES)}")
