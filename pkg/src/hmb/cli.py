"""Command-line front end: dataset generation and ingestion, saliency
rendering, model training, paired evaluation, predictability analyses and
one-shot figure pipelines.

Conventions shared by every subcommand: an optional JSON config file
supplies defaults, command-line flags override it, one experiment writes
into one output directory, and every artifact carries the configuration
hash and seed so runs can be told apart and repeated.  Exit codes: 0 on
success, 2 for configuration problems (bad flags, missing inputs), 1 for
runtime failures.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import shutil
import sys
from typing import Dict, List, Optional

import numpy as np

from . import baselines, evaluation, info, models, saliency, synth
from .dataset import (Dataset, WindowSpec, load_dataset, load_traces,
                      save_dataset, split_train_test)

__all__ = ["main", "ConfigError"]

_EXIT_OK = 0
_EXIT_RUNTIME = 1
_EXIT_CONFIG = 2


class ConfigError(Exception):
    """A problem with flags, config values or referenced inputs."""


def _parse_grid(text: str):
    try:
        h, w = text.lower().split("x")
        grid = (int(h), int(w))
    except ValueError:
        raise ConfigError(f"bad grid {text!r}; expected HxW, e.g. 64x64")
    if grid[0] < 1 or grid[1] < 1:
        raise ConfigError(f"grid sides must be positive, got {text!r}")
    return grid


def _parse_s_grid(text: str) -> List[float]:
    try:
        vals = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"bad lag list {text!r}; expected comma floats")
    if not vals:
        raise ConfigError("lag list is empty")
    return vals


def _canonical_options(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _config_hash(args) -> str:
    blob = json.dumps(_canonical_options(args), sort_keys=True,
                      default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _comment_lines(args) -> List[str]:
    return [f"config_hash={_config_hash(args)}",
            f"seed={getattr(args, 'seed', 0)}"]


def _write_manifest(out_dir: str, args) -> None:
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": args.command,
        "config_hash": _config_hash(args),
        "seed": getattr(args, "seed", 0),
        "options": _canonical_options(args),
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _write_csv(path: str, header: List[str], rows, comments) -> None:
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow(row)


def _require_dir(path: Optional[str], what: str) -> str:
    if not path:
        raise ConfigError(f"missing required {what}")
    if not os.path.isdir(path):
        raise ConfigError(f"{what} {path!r} is not a directory")
    return path


def _load_dataset_arg(args) -> Dataset:
    _require_dir(args.dataset, "--dataset directory")
    return load_dataset(args.dataset)


def _window_spec(args) -> WindowSpec:
    return WindowSpec(m_history=args.m_history, horizon=args.horizon,
                      t_start=args.t_start, dt=args.dt)


def _saliency_path(dir_path: str, vid: str) -> str:
    return os.path.join(dir_path, f"{vid}.salm")


def _load_saliency_dir(dir_path: Optional[str], video_ids,
                       what: str = "--saliency directory"):
    _require_dir(dir_path, what)
    out = {}
    missing = []
    for vid in video_ids:
        path = _saliency_path(dir_path, vid)
        if os.path.exists(path):
            out[vid] = saliency.load_saliency(path)
        else:
            missing.append(vid)
    if missing:
        raise ConfigError(
            f"no saliency maps for videos {missing} in {dir_path!r}")
    return out


def _save_saliency_dir(dir_path: str, seqs: Dict[str, object]) -> None:
    os.makedirs(dir_path, exist_ok=True)
    for vid in sorted(seqs):
        saliency.save_saliency(_saliency_path(dir_path, vid), seqs[vid])


def _render_gt_saliency(dataset: Dataset, grid, sigma: float,
                        jobs: int = 1) -> Dict[str, object]:
    """Ground-truth maps per video, optionally cached under $HMB_CACHE."""
    cache_dir = os.environ.get("HMB_CACHE")
    fp = models.dataset_fingerprint(dataset)

    def cache_path(vid):
        name = f"{fp}_{vid}_{grid[0]}x{grid[1]}_{sigma:.5f}.salm"
        return os.path.join(cache_dir, name)

    def render(vid):
        if cache_dir and os.path.exists(cache_path(vid)):
            return saliency.load_saliency(cache_path(vid))
        seq = saliency.gt_saliency_sequence(dataset, vid, grid=grid,
                                            sigma=sigma)
        if cache_dir:
            os.makedirs(cache_dir, exist_ok=True)
            saliency.save_saliency(cache_path(vid), seq)
        return seq

    vids = dataset.video_ids
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rendered = list(pool.map(render, vids))
        return dict(zip(vids, rendered))
    return {vid: render(vid) for vid in vids}


# subcommand handlers --------------------------------------------------


def cmd_synth(args) -> int:
    if not args.out:
        raise ConfigError("synth requires --out")
    if args.kind not in synth.KINDS:
        raise ConfigError(
            f"unknown kind {args.kind!r}; expected one of {synth.KINDS}")
    grid = _parse_grid(args.grid)
    dataset, _, _ = synth.synth_generate(
        kind=args.kind, n_videos=args.n_videos, n_users=args.n_users,
        duration_s=args.duration, seed=args.seed)
    save_dataset(dataset, os.path.join(args.out, "dataset"))
    if not args.skip_saliency:
        seqs = _render_gt_saliency(dataset, grid,
                                   math.radians(args.sigma_deg), args.jobs)
        _save_saliency_dir(os.path.join(args.out, "saliency"), seqs)
    _write_manifest(args.out, args)
    return _EXIT_OK


def cmd_ingest(args) -> int:
    if not args.out:
        raise ConfigError("ingest requires --out")
    if not args.in_path or not os.path.exists(args.in_path):
        raise ConfigError(f"input trace file {args.in_path!r} not found")
    dataset = load_traces(args.in_path, fmt=args.format, dt=args.dt)
    if args.test_videos:
        dataset = split_train_test(dataset, args.test_videos.split(","))
    save_dataset(dataset, os.path.join(args.out, "dataset"))
    _write_manifest(args.out, args)
    return _EXIT_OK


def cmd_saliency(args) -> int:
    if not args.out:
        raise ConfigError("saliency requires --out")
    dataset = _load_dataset_arg(args)
    if args.saliency_cmd == "gt":
        grid = _parse_grid(args.grid)
        seqs = _render_gt_saliency(dataset, grid,
                                   math.radians(args.sigma_deg), args.jobs)
        _save_saliency_dir(os.path.join(args.out, "saliency"), seqs)
    else:  # entropy
        seqs = _load_saliency_dir(args.saliency, dataset.video_ids)
        scores = evaluation.video_entropy_scores(seqs, dataset.video_ids)
        labels = evaluation.categorize_by_entropy(dataset, seqs,
                                                  quantile=args.quantile)
        rows = [[vid, repr(scores[vid]), labels[vid]]
                for vid in sorted(scores)]
        os.makedirs(args.out, exist_ok=True)
        _write_csv(os.path.join(args.out, "video_entropy.csv"),
                   ["video_id", "entropy_bits", "category"], rows,
                   _comment_lines(args))
    _write_manifest(args.out, args)
    return _EXIT_OK


def cmd_train(args) -> int:
    if not args.out:
        raise ConfigError("train requires --out")
    if args.model not in models.MODEL_KINDS:
        raise ConfigError(
            f"unknown model {args.model!r}; expected one of "
            f"{sorted(models.MODEL_KINDS)}")
    dataset = _load_dataset_arg(args)
    spec = _window_spec(args)
    cfg = models.TrainConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
        seed=args.seed, window=spec, max_windows=args.max_windows,
        scheduled_sampling=args.scheduled_sampling)
    model = models.build_model(args.model, units=args.units,
                               grid=_parse_grid(args.grid),
                               seed=args.seed,
                               encoder_saliency=args.encoder_saliency)
    sal = None
    if model.uses_saliency:
        sal = _load_saliency_dir(args.saliency, dataset.video_ids)
    losses = models.train_model(model, dataset, cfg, sal)
    os.makedirs(args.out, exist_ok=True)
    models.save_model(os.path.join(args.out, f"model_{args.model}.npz"),
                      model, cfg.as_dict(),
                      models.dataset_fingerprint(dataset))
    _write_csv(os.path.join(args.out, "train_loss.csv"),
               ["epoch", "loss"],
               [[e, repr(v)] for e, v in enumerate(losses)],
               _comment_lines(args))
    _write_manifest(args.out, args)
    return _EXIT_OK


def _resolve_predictors(names: List[str], models_dir: Optional[str]):
    preds = []
    trained: Dict[str, models.Seq2SeqModel] = {}
    for name in names:
        if name in models.MODEL_KINDS:
            if not models_dir:
                raise ConfigError(
                    f"predictor {name!r} needs --models with a trained "
                    f"checkpoint")
            path = os.path.join(models_dir, f"model_{name}.npz")
            if not os.path.exists(path):
                raise ConfigError(
                    f"no trained checkpoint for predictor {name!r} at "
                    f"{path!r}")
            trained[name] = models.load_model(path)
        try:
            preds.append(baselines.predictor_from_name(name, trained))
        except ValueError as e:
            raise ConfigError(str(e))
    return preds


def cmd_evaluate(args) -> int:
    if not args.out:
        raise ConfigError("evaluate requires --out")
    dataset = _load_dataset_arg(args)
    spec = _window_spec(args)
    names = [tok.strip() for tok in args.predictors.split(",")
             if tok.strip()]
    if not names:
        raise ConfigError("no predictors requested")
    preds = _resolve_predictors(names, args.models)
    needs_maps = any(
        isinstance(p, baselines.KSaliencyPredictor)
        or (isinstance(p, baselines.ModelPredictor)
            and p.model.uses_saliency)
        for p in preds)
    sal = None
    categories = None
    if args.saliency:
        sal = _load_saliency_dir(args.saliency, dataset.video_ids)
        categories = evaluation.categorize_by_entropy(
            dataset, sal, quantile=args.quantile)
    elif needs_maps:
        raise ConfigError(
            "selected predictors need saliency maps; pass --saliency")
    report = evaluation.evaluate(preds, dataset, sal, spec,
                                 categories=categories)
    evaluation.write_report(report, args.out, _comment_lines(args))
    _write_manifest(args.out, args)
    return _EXIT_OK


def cmd_analyze(args) -> int:
    if not args.out:
        raise ConfigError("analyze requires --out")
    dataset = _load_dataset_arg(args)
    lags = _parse_s_grid(args.s_grid)
    os.makedirs(args.out, exist_ok=True)
    if args.analysis == "mi":
        rows = []
        for s in lags:
            per_video, _ = info.mutual_information(dataset, s,
                                                   t_start=args.t_start)
            rows += [[vid, f"{s:.2f}", repr(per_video[vid])]
                     for vid in sorted(per_video)]
        _write_csv(os.path.join(args.out, "mi_by_lag.csv"),
                   ["video_id", "s_seconds", "mi_normalized"], rows,
                   _comment_lines(args))
    else:  # te
        sal = _load_saliency_dir(args.saliency, dataset.video_ids)
        rows = []
        for s in lags:
            per_video, _ = info.transfer_entropy(dataset, sal, s,
                                                 mode=args.mode,
                                                 t_start=args.t_start)
            rows += [[vid, f"{s:.2f}", repr(per_video[vid])]
                     for vid in sorted(per_video)]
        _write_csv(os.path.join(args.out, "te_by_lag.csv"),
                   ["video_id", "s_seconds", "te_bits"], rows,
                   _comment_lines(args))
    _write_manifest(args.out, args)
    return _EXIT_OK


def _plot_curves(curves_path: str, out_path: str, ylabel: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: Dict[str, List[tuple]] = {}
    with open(curves_path, newline="") as fh:
        rows = [r for r in csv.reader(fh)
                if r and not r[0].startswith("#")]
    for row in rows[1:]:
        series.setdefault(row[0], []).append(
            (float(row[1]), float(row[2])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(series):
        pts = sorted(series[name])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                markersize=3, label=name)
    ax.set_xlabel("prediction step s (seconds)")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120, metadata={"Date": None})
    plt.close(fig)


def cmd_plot(args) -> int:
    if not args.out:
        raise ConfigError("plot requires --out")
    curves = os.path.join(
        _require_dir(args.report, "--report directory"), "curves.csv")
    if not os.path.exists(curves):
        raise ConfigError(f"no curves.csv under {args.report!r}")
    os.makedirs(args.out, exist_ok=True)
    _plot_curves(curves, os.path.join(args.out, "error_vs_s.png"),
                 "mean orthodromic error (rad)")
    _write_manifest(args.out, args)
    return _EXIT_OK


# one-shot figure pipelines -------------------------------------------

_FIG_NAMES = ("k-sal", "track-avg", "mi", "te")


def _merge_datasets(parts: List[Dataset]) -> Dataset:
    traces = [tr for ds in parts for tr in ds.traces]
    durations = {}
    for ds in parts:
        durations.update(ds.video_durations)
    return Dataset(traces=traces, video_durations=durations)


def _fig_scale(args) -> dict:
    if args.paper_scale:
        return dict(units=64, grid=(64, 64), epochs=50, max_windows=None,
                    n_videos=4, n_users=10, duration=60.0)
    return dict(units=16, grid=(16, 16), epochs=5, max_windows=256,
                n_videos=2, n_users=5, duration=30.0)


def _fig_k_sal(args, out_dir: str) -> None:
    # focus viewers sweep widely around one dominant region while
    # exploration viewers scan fast; this makes extra candidate peaks
    # pay off at short horizons and the top peak win at long ones
    parts = [
        synth.synth_generate("static_focus", n_videos=4, n_users=10,
                             duration_s=60.0, seed=args.seed,
                             jitter_deg_s=72.0, jitter_tau_s=1.0,
                             converge_tau_s=1.3)[0],
        synth.synth_generate("exploration", n_videos=4, n_users=10,
                             duration_s=60.0, seed=args.seed + 1,
                             speed_deg_s=60.0, jitter_tau_s=0.8)[0],
    ]
    dataset = _merge_datasets(parts)
    sal = _render_gt_saliency(dataset, (32, 32), math.radians(6.0),
                              args.jobs)
    spec = WindowSpec()
    kappa = 5
    preds = [baselines.KSaliencyPredictor(k) for k in range(1, kappa + 1)]
    report = evaluation.evaluate(preds, dataset, sal, spec)
    evaluation.write_report(report, out_dir, _comment_lines(args))
    per_k = {k: report.macro[f"k-sal:{k}"] for k in range(1, kappa + 1)}
    envelope = baselines.saliency_only_error_envelope(per_k, kappa)
    rows = [[f"{s:.2f}", repr(float(envelope[j]))]
            for j, s in enumerate(report.s_grid)]
    _write_csv(os.path.join(out_dir, "envelope.csv"),
               ["s_seconds", "min_error"], rows, _comment_lines(args))
    _plot_curves(os.path.join(out_dir, "curves.csv"),
                 os.path.join(out_dir, "fig_k_sal.png"),
                 "mean orthodromic error (rad)")


def _fig_track_avg(args, out_dir: str) -> None:
    p = _fig_scale(args)
    dataset, _, _ = synth.synth_generate(
        "static_focus", n_videos=max(p["n_videos"], 2),
        n_users=p["n_users"], duration_s=p["duration"], seed=args.seed)
    test_ids = dataset.video_ids[-1:]
    dataset = split_train_test(dataset, test_ids)
    sal = _render_gt_saliency(dataset, p["grid"], math.radians(6.0),
                              args.jobs)
    spec = WindowSpec()
    cfg = models.TrainConfig(epochs=p["epochs"], seed=args.seed,
                             window=spec, max_windows=p["max_windows"])
    trained = {}
    for kind in ("pos-only", "track"):
        model = models.build_model(kind, units=p["units"], grid=p["grid"],
                                   seed=args.seed)
        models.train_model(model, dataset, cfg,
                           sal if model.uses_saliency else None)
        trained[kind] = model
    preds = [baselines.StaticPredictor(),
             baselines.ModelPredictor(trained["pos-only"]),
             baselines.ModelPredictor(trained["track"])]
    report = evaluation.evaluate(preds, dataset, sal, spec)
    evaluation.write_report(report, out_dir, _comment_lines(args))
    _plot_curves(os.path.join(out_dir, "curves.csv"),
                 os.path.join(out_dir, "fig_track_avg.png"),
                 "mean orthodromic error (rad)")


def _fig_mi(args, out_dir: str) -> None:
    dataset, _, _ = synth.synth_generate(
        "exploration", n_videos=4, n_users=10, duration_s=60.0,
        seed=args.seed)
    lags = [round(0.2 * i, 1) for i in range(1, 26)]
    rows, curve = [], []
    for s in lags:
        per_video, avg = info.mutual_information(dataset, s)
        rows += [[vid, f"{s:.2f}", repr(per_video[vid])]
                 for vid in sorted(per_video)]
        curve.append([f"{s:.2f}", repr(avg), repr(avg)])
    _write_csv(os.path.join(out_dir, "mi_by_lag.csv"),
               ["video_id", "s_seconds", "mi_normalized"], rows,
               _comment_lines(args))
    _write_csv(os.path.join(out_dir, "curves.csv"),
               ["series", "s", "value", "value2"],
               [["mi_normalized"] + row for row in curve],
               _comment_lines(args))
    _plot_curves(os.path.join(out_dir, "curves.csv"),
                 os.path.join(out_dir, "fig_mi.png"),
                 "normalized mutual information")


def _fig_te(args, out_dir: str) -> None:
    dataset, _, _ = synth.synth_generate(
        "static_focus", n_videos=4, n_users=10, duration_s=60.0,
        seed=args.seed)
    sal = _render_gt_saliency(dataset, (32, 32), math.radians(6.0),
                              args.jobs)
    lags = [round(0.2 * i, 1) for i in range(26)]
    rows, curve = [], []
    for s in lags:
        per_video, avg = info.transfer_entropy(dataset, sal, s)
        rows += [[vid, f"{s:.2f}", repr(per_video[vid])]
                 for vid in sorted(per_video)]
        curve.append([f"{s:.2f}", repr(avg), repr(avg)])
    _write_csv(os.path.join(out_dir, "te_by_lag.csv"),
               ["video_id", "s_seconds", "te_bits"], rows,
               _comment_lines(args))
    _write_csv(os.path.join(out_dir, "curves.csv"),
               ["series", "s", "value", "value2"],
               [["te_bits"] + row for row in curve],
               _comment_lines(args))
    _plot_curves(os.path.join(out_dir, "curves.csv"),
                 os.path.join(out_dir, "fig_te.png"),
                 "transfer entropy (bits)")


def cmd_repro_fig(args) -> int:
    if not args.out:
        raise ConfigError("repro-fig requires --out")
    if args.name not in _FIG_NAMES:
        raise ConfigError(
            f"unknown figure {args.name!r}; expected one of {_FIG_NAMES}")
    os.makedirs(args.out, exist_ok=True)
    handler = {"k-sal": _fig_k_sal, "track-avg": _fig_track_avg,
               "mi": _fig_mi, "te": _fig_te}[args.name]
    handler(args, args.out)
    _write_manifest(args.out, args)
    return _EXIT_OK


# parser wiring --------------------------------------------------------


def _add_window_flags(p) -> None:
    p.add_argument("--m-history", type=int, default=5)
    p.add_argument("--horizon", type=int, default=25)
    p.add_argument("--t-start", type=float, default=6.0)
    p.add_argument("--dt", type=float, default=0.2)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default options")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--out", help="output directory")
    scale = common.add_mutually_exclusive_group()
    scale.add_argument("--desk-scale", dest="paper_scale",
                       action="store_false",
                       help="small fast settings (default)")
    scale.add_argument("--paper-scale", dest="paper_scale",
                       action="store_true",
                       help="full-size settings")
    common.set_defaults(paper_scale=False)

    parser = argparse.ArgumentParser(
        prog="hmb",
        description="head-motion prediction benchmark pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic dataset plus saliency")
    p.add_argument("--kind", default="exploration")
    p.add_argument("--n-videos", type=int, default=4)
    p.add_argument("--n-users", type=int, default=10)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--grid", default="64x64")
    p.add_argument("--sigma-deg", type=float, default=6.0)
    p.add_argument("--skip-saliency", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", parents=[common],
                       help="resample raw trace CSV onto the uniform grid")
    p.add_argument("--in", dest="in_path", help="raw trace CSV file")
    p.add_argument("--format", choices=("csv_angles", "csv_xyz"),
                   default="csv_angles")
    p.add_argument("--dt", type=float, default=0.2)
    p.add_argument("--test-videos",
                   help="comma list of video ids for the test split")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("saliency", parents=[common],
                       help="render ground-truth maps or score entropy")
    p.add_argument("saliency_cmd", choices=("gt", "entropy"))
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--grid", default="64x64")
    p.add_argument("--sigma-deg", type=float, default=6.0)
    p.add_argument("--saliency", help="map directory (entropy mode)")
    p.add_argument("--quantile", type=float, default=0.1)
    p.set_defaults(func=cmd_saliency)

    p = sub.add_parser("train", parents=[common],
                       help="train one predictor network")
    p.add_argument("model", help="model kind, e.g. track or pos-only")
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--saliency", help="map directory")
    p.add_argument("--units", type=int, default=64)
    p.add_argument("--grid", default="64x64")
    p.add_argument("--encoder-saliency",
                   choices=("contemporaneous", "zeros"),
                   default="contemporaneous")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=5e-4)
    p.add_argument("--max-windows", type=int, default=None)
    p.add_argument("--scheduled-sampling", type=float, default=0.0)
    _add_window_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="score predictors on the test windows")
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--predictors", default="static",
                   help="comma list, e.g. static,k-sal:2,track")
    p.add_argument("--models", help="directory with model_*.npz")
    p.add_argument("--saliency", help="map directory")
    p.add_argument("--quantile", type=float, default=0.1)
    _add_window_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", parents=[common],
                       help="mutual-information / transfer-entropy scans")
    p.add_argument("analysis", choices=("mi", "te"))
    p.add_argument("--dataset", help="dataset directory")
    p.add_argument("--saliency", help="map directory (te)")
    p.add_argument("--s-grid",
                   default=",".join(f"{0.2 * i:.1f}" for i in
                                    range(1, 26)))
    p.add_argument("--mode", choices=("value", "argmax"), default="value")
    p.add_argument("--t-start", type=float, default=6.0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plot", parents=[common],
                       help="draw error-vs-s curves from a report")
    p.add_argument("--report", help="directory holding curves.csv")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("repro-fig", parents=[common],
                       help="one-shot pipeline for a named figure")
    p.add_argument("name", help=f"one of {', '.join(_FIG_NAMES)}")
    p.set_defaults(func=cmd_repro_fig)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser,
                       argv: List[str]) -> None:
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    if not os.path.exists(known.config):
        raise ConfigError(f"config file {known.config!r} not found")
    try:
        with open(known.config) as fh:
            values = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}")
    if not isinstance(values, dict):
        raise ConfigError("config file must hold a JSON object")
    valid = set()
    subparsers = parser._subparsers._group_actions[0].choices.values()
    for sub in subparsers:
        valid.update(a.dest for a in sub._actions)
    unknown = sorted(set(values) - valid)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    # defaults must land on each subparser: subcommands parse into a
    # fresh namespace, so main-parser defaults would be overwritten
    for sub in subparsers:
        dests = {a.dest for a in sub._actions}
        sub.set_defaults(**{k: v for k, v in values.items()
                            if k in dests})


def main(argv: Optional[List[str]] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        _apply_config_file(parser, list(argv))
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return int(e.code or 0)
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return _EXIT_CONFIG
    except (FileNotFoundError, NotADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return _EXIT_CONFIG
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return _EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
