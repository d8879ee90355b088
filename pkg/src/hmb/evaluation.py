"""Paired evaluation of predictors over prediction windows, plus video
categorization by saliency entropy and deterministic report files.

Every predictor is scored on the exact same window multiset, with the
orthodromic distance at each future step.  Aggregation reports per
(predictor, video, step) means, a per-video-weighted overall mean (macro),
a per-window-weighted one (micro), and per-category means.
"""

import csv
import dataclasses
import math
import warnings
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import KSaliencyPredictor, ModelPredictor, StaticPredictor
from .dataset import Dataset, WindowSpec, windows
from .models import window_saliency_slice
from .saliency import extract_peaks, saliency_entropy
from .sphere import orthodromic_distance

__all__ = [
    "EvalReport",
    "evaluate",
    "video_entropy_scores",
    "categorize_by_entropy",
    "write_report",
]

_BATCH = 64


@dataclasses.dataclass
class EvalReport:
    s_grid: np.ndarray                 # (H,) seconds
    predictor_names: List[str]
    video_ids: List[str]
    categories: Dict[str, str]         # video -> focus/exploration/unlabeled
    counts: Dict[str, int]             # video -> windows (same for all preds)
    per_video: Dict[str, Dict[str, np.ndarray]]   # pred -> video -> (H,)
    macro: Dict[str, np.ndarray]       # pred -> (H,) mean over videos
    micro: Dict[str, np.ndarray]       # pred -> (H,) mean over windows
    per_category: Dict[str, Dict[str, np.ndarray]]  # pred -> label -> (H,)


def _predict_model(pred: ModelPredictor, wins, hist, saliency, spec):
    """Batched inference for the seq2seq predictors."""
    n = len(wins)
    out = np.empty((n, spec.horizon, 3))
    needs_maps = pred.model.uses_saliency
    for lo in range(0, n, _BATCH):
        hi = min(lo + _BATCH, n)
        maps = None
        if needs_maps:
            if saliency is None:
                raise ValueError(
                    f"predictor {pred.name!r} requires saliency maps")
            maps = np.stack([
                window_saliency_slice(wins[i], saliency, spec)
                for i in range(lo, hi)])
        out[lo:hi] = pred.model.predict_batch(hist[lo:hi], maps,
                                              spec.horizon)
    return out


def _predict_k_saliency(pred: KSaliencyPredictor, wins, hist, saliency,
                        spec, peak_cache):
    """Peak chasing with per-(video, frame) peak reuse across users."""
    if saliency is None:
        raise ValueError(f"predictor {pred.name!r} requires saliency maps")
    out = np.empty((len(wins), spec.horizon, 3))
    for i, w in enumerate(wins):
        seq = saliency.get(w.video_id)
        if seq is None:
            raise ValueError(
                f"predictor {pred.name!r} has no saliency for video "
                f"{w.video_id!r}")
        peaks = []
        for step in range(1, spec.horizon + 1):
            frame = w.t_index + step
            if frame >= len(seq.maps):
                raise ValueError(
                    f"saliency for video {w.video_id!r} does not cover "
                    f"frame {frame}")
            key = (w.video_id, frame, pred.k, pred.nms_radius)
            if key not in peak_cache:
                kwargs = {}
                if pred.nms_radius is not None:
                    kwargs["nms_radius"] = pred.nms_radius
                peak_cache[key] = extract_peaks(seq.maps[frame], pred.k,
                                                **kwargs)
            peaks.append(peak_cache[key])
        out[i] = pred.predict(w.history, peaks, spec.horizon)
    return out


def evaluate(predictors: Sequence, dataset: Dataset,
             saliency_per_video: Optional[Dict[str, object]] = None,
             spec: Optional[WindowSpec] = None,
             categories: Optional[Dict[str, str]] = None) -> EvalReport:
    """Score every predictor on every window of the dataset's test side.

    Datasets without a split are evaluated whole.  Deterministic: windows
    are enumerated in sorted trace order and summed in that fixed order.
    """
    spec = spec or WindowSpec()
    subset = "test" if any(v == "test" for v in dataset.split.values()) \
        else "all"
    wins = windows(dataset, spec, subset=subset)
    if not wins:
        raise ValueError("no evaluation windows available")
    names = [p.name for p in predictors]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate predictor names in {names}")
    hist = np.stack([w.history for w in wins])
    fut = np.stack([w.future for w in wins])
    video_ids = sorted({w.video_id for w in wins})
    by_video = {vid: np.array([i for i, w in enumerate(wins)
                               if w.video_id == vid])
                for vid in video_ids}
    categories = dict(categories or {})
    cat_of = {vid: categories.get(vid, "unlabeled") for vid in video_ids}

    per_video: Dict[str, Dict[str, np.ndarray]] = {}
    macro: Dict[str, np.ndarray] = {}
    micro: Dict[str, np.ndarray] = {}
    per_category: Dict[str, Dict[str, np.ndarray]] = {}
    peak_cache: dict = {}
    for pred in predictors:
        if isinstance(pred, ModelPredictor):
            preds = _predict_model(pred, wins, hist, saliency_per_video,
                                   spec)
        elif isinstance(pred, KSaliencyPredictor):
            preds = _predict_k_saliency(pred, wins, hist, saliency_per_video,
                                        spec, peak_cache)
        elif isinstance(pred, StaticPredictor):
            preds = np.broadcast_to(hist[:, -1:, :],
                                    fut.shape).copy()
        else:
            preds = np.empty_like(fut)
            for i, w in enumerate(wins):
                maps = None
                if saliency_per_video is not None \
                        and w.video_id in saliency_per_video:
                    maps = window_saliency_slice(w, saliency_per_video, spec)
                preds[i] = pred.predict(w.history, maps, spec.horizon)
        errs = orthodromic_distance(preds, fut)  # (n, H)
        vid_means = {vid: errs[idx].mean(axis=0)
                     for vid, idx in by_video.items()}
        per_video[pred.name] = vid_means
        macro[pred.name] = np.mean(
            np.stack([vid_means[v] for v in video_ids]), axis=0)
        micro[pred.name] = errs.mean(axis=0)
        cats = sorted(set(cat_of.values()))
        per_category[pred.name] = {
            c: np.mean(np.stack([vid_means[v] for v in video_ids
                                 if cat_of[v] == c]), axis=0)
            for c in cats
        }
    return EvalReport(
        s_grid=spec.horizon_seconds(),
        predictor_names=names,
        video_ids=video_ids,
        categories=cat_of,
        counts={vid: len(idx) for vid, idx in by_video.items()},
        per_video=per_video,
        macro=macro,
        micro=micro,
        per_category=per_category,
    )


def video_entropy_scores(gt_saliency: Dict[str, object],
                         video_ids: Sequence[str],
                         t_min: float = 6.0) -> Dict[str, float]:
    """Mean spherical map entropy per video over frames with t >= t_min."""
    scores: Dict[str, float] = {}
    for vid in sorted(video_ids):
        seq = gt_saliency.get(vid)
        if seq is None:
            raise ValueError(f"no saliency for video {vid!r}")
        first = max(int(math.ceil(t_min / seq.dt - 1e-9)), 0)
        frames = seq.maps[first:]
        if len(frames) == 0:
            raise ValueError(
                f"video {vid!r} has no frames at t >= {t_min}")
        scores[vid] = float(np.mean([saliency_entropy(f) for f in frames]))
    return scores


def categorize_by_entropy(dataset: Dataset,
                          gt_saliency: Dict[str, object],
                          quantile: float = 0.1,
                          t_min: float = 6.0) -> Dict[str, str]:
    """Label the lowest-entropy tail focus, the highest exploration.

    Per-video score: mean spherical map entropy over frames with
    t >= t_min.  Ties order by video id.  When the tail size
    floor(n * quantile) is zero, or the two tails would overlap, every
    video is unlabeled and a warning is emitted.
    """
    if not 0 < quantile <= 0.5:
        raise ValueError("quantile must lie in (0, 0.5]")
    ent = video_entropy_scores(gt_saliency, dataset.video_durations, t_min)
    scores = sorted((ent[vid], vid) for vid in ent)
    n = len(scores)
    take = int(math.floor(n * quantile + 1e-9))
    labels = {vid: "unlabeled" for _, vid in scores}
    if take < 1 or 2 * take > n:
        warnings.warn(
            f"{n} videos are too few for quantile {quantile}; "
            f"all left unlabeled")
        return labels
    for _, vid in scores[:take]:
        labels[vid] = "focus"
    for _, vid in scores[n - take:]:
        labels[vid] = "exploration"
    return labels


def _fmt(x: float) -> str:
    return repr(float(x))


def write_report(report: EvalReport, out_dir,
                 comment_lines: Optional[List[str]] = None) -> List[str]:
    """Emit errors_by_step.csv, curve data and a text summary.

    Output bytes are a pure function of the report (plus comment_lines),
    so reruns on identical inputs produce identical files.
    """
    import os
    os.makedirs(out_dir, exist_ok=True)
    written = []

    def _open(name):
        path = os.path.join(out_dir, name)
        written.append(path)
        return open(path, "w", newline="")

    header = [f"# {line}" for line in (comment_lines or [])]

    with _open("errors_by_step.csv") as fh:
        for line in header:
            fh.write(line + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["predictor", "video", "category", "s", "mean_error",
                     "n"])
        for name in report.predictor_names:
            for vid in report.video_ids:
                means = report.per_video[name][vid]
                for j, s in enumerate(report.s_grid):
                    wr.writerow([name, vid, report.categories[vid],
                                 f"{s:.2f}", _fmt(means[j]),
                                 report.counts[vid]])

    with _open("curves.csv") as fh:
        for line in header:
            fh.write(line + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["predictor", "s", "macro_mean", "micro_mean"])
        for name in report.predictor_names:
            for j, s in enumerate(report.s_grid):
                wr.writerow([name, f"{s:.2f}", _fmt(report.macro[name][j]),
                             _fmt(report.micro[name][j])])

    with _open("category_curves.csv") as fh:
        for line in header:
            fh.write(line + "\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["predictor", "category", "s", "mean_error"])
        for name in report.predictor_names:
            for cat in sorted(report.per_category.get(name, {})):
                means = report.per_category[name][cat]
                for j, s in enumerate(report.s_grid):
                    wr.writerow([name, cat, f"{s:.2f}", _fmt(means[j])])

    with _open("summary.txt") as fh:
        for line in header:
            fh.write(line + "\n")
        fh.write("mean orthodromic error (rad), macro over videos\n")
        picks = [j for j in range(len(report.s_grid))
                 if j % 5 == 4 or j == 0]
        cols = "".join(f"  s={report.s_grid[j]:.1f}" for j in picks)
        fh.write(f"{'predictor':<18}{cols}\n")
        for name in report.predictor_names:
            row = "".join(f"  {report.macro[name][j]:5.3f}" for j in picks)
            fh.write(f"{name:<18}{row}\n")
    return written
