import csv
import json
import os
import shutil

import numpy as np
import pytest

from hmb import cli
from hmb.dataset import load_dataset


def run(*argv):
    return cli.main(list(argv))


def tree_bytes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for name in files:
            path = os.path.join(dirpath, name)
            with open(path, "rb") as fh:
                out[os.path.relpath(path, root)] = fh.read()
    return out


SMALL_SYNTH = ["--kind", "exploration", "--n-videos", "1", "--n-users",
               "2", "--duration", "8.0", "--grid", "8x8"]


def synth_small(out_dir, seed="3"):
    code = run("synth", *SMALL_SYNTH, "--seed", seed, "--out",
               str(out_dir))
    assert code == 0
    return os.path.join(str(out_dir), "dataset")


def test_synth_is_deterministic(tmp_path):
    out = tmp_path / "run"
    synth_small(out)
    first = tree_bytes(out)
    shutil.rmtree(out)
    synth_small(out)
    assert tree_bytes(out) == first
    assert set(first) >= {"run_manifest.json", "dataset/traces.csv",
                          "dataset/manifest.json",
                          "saliency/exploration_00.salm"}


def test_synth_seed_changes_traces(tmp_path):
    a = synth_small(tmp_path / "a", seed="3")
    b = synth_small(tmp_path / "b", seed="4")
    ta = open(os.path.join(a, "traces.csv"), "rb").read()
    tb = open(os.path.join(b, "traces.csv"), "rb").read()
    assert ta != tb


def test_unknown_flag_exits_2(capsys):
    assert run("synth", "--bogus") == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_subcommand_exits_2():
    assert run("frobnicate") == 2


def test_help_exits_0():
    assert run("--help") == 0


def test_bad_kind_exits_2(tmp_path, capsys):
    assert run("synth", "--kind", "nope", "--out", str(tmp_path)) == 2
    assert "kind" in capsys.readouterr().err


def test_manifest_embeds_hash_and_seed(tmp_path):
    synth_small(tmp_path / "run", seed="9")
    with open(tmp_path / "run" / "run_manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["seed"] == 9
    assert len(manifest["config_hash"]) == 16
    assert manifest["command"] == "synth"


def test_ingest_roundtrip(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    with open(raw, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["video_id", "user_id", "timestamp_s", "theta_rad",
                     "phi_rad"])
        for i in range(30):
            wr.writerow(["v0", "u0", f"{0.1 * i:.3f}",
                         f"{0.05 * i:.4f}", "0.0"])
    out = tmp_path / "ing"
    assert run("ingest", "--in", str(raw), "--out", str(out)) == 0
    ds = load_dataset(os.path.join(out, "dataset"))
    assert ds.video_ids == ["v0"]
    assert run("ingest", "--in", str(tmp_path / "nope.csv"), "--out",
               str(out)) == 2
    assert "not found" in capsys.readouterr().err


def test_saliency_gt_and_entropy(tmp_path):
    ds_dir = synth_small(tmp_path / "run")
    sal_out = tmp_path / "sal"
    assert run("saliency", "gt", "--dataset", ds_dir, "--grid", "8x8",
               "--out", str(sal_out)) == 0
    assert (sal_out / "saliency" / "exploration_00.salm").exists()
    ent_out = tmp_path / "ent"
    with pytest.warns(UserWarning):
        code = run("saliency", "entropy", "--dataset", ds_dir,
                   "--saliency", str(sal_out / "saliency"),
                   "--quantile", "0.5", "--out", str(ent_out))
    assert code == 0
    rows = (ent_out / "video_entropy.csv").read_text().splitlines()
    assert rows[0].startswith("# config_hash=")
    assert rows[1].startswith("# seed=")
    assert rows[2] == "video_id,entropy_bits,category"
    assert rows[3].startswith("exploration_00,")


def test_saliency_gt_uses_cache(tmp_path, monkeypatch):
    ds_dir = synth_small(tmp_path / "run")
    cache = tmp_path / "cache"
    monkeypatch.setenv("HMB_CACHE", str(cache))
    out1, out2 = tmp_path / "s1", tmp_path / "s2"
    assert run("saliency", "gt", "--dataset", ds_dir, "--grid", "8x8",
               "--out", str(out1)) == 0
    assert len(list(cache.iterdir())) == 1
    assert run("saliency", "gt", "--dataset", ds_dir, "--grid", "8x8",
               "--out", str(out2)) == 0
    assert tree_bytes(out1 / "saliency") == tree_bytes(out2 / "saliency")


TRAIN_FLAGS = ["--units", "4", "--grid", "8x8", "--epochs", "1",
               "--max-windows", "12", "--m-history", "2", "--horizon",
               "2", "--t-start", "0.6"]


def test_train_and_evaluate_pipeline(tmp_path):
    run_dir = tmp_path / "run"
    ds_dir = synth_small(run_dir)
    sal_dir = os.path.join(str(run_dir), "saliency")
    train_out = tmp_path / "train"
    assert run("train", "pos-only", "--dataset", ds_dir,
               *TRAIN_FLAGS, "--out", str(train_out)) == 0
    assert (train_out / "model_pos-only.npz").exists()
    loss_rows = (train_out / "train_loss.csv").read_text().splitlines()
    assert loss_rows[2] == "epoch,loss"
    assert len(loss_rows) == 4  # comments + header + 1 epoch
    ev_out = tmp_path / "eval"
    assert run("evaluate", "--dataset", ds_dir, "--predictors",
               "static,pos-only,k-sal:1", "--models", str(train_out),
               "--saliency", sal_dir, "--quantile", "0.5",
               "--m-history", "2", "--horizon", "2", "--t-start", "0.6",
               "--out", str(ev_out)) == 0
    rows = (ev_out / "errors_by_step.csv").read_text().splitlines()
    assert rows[0].startswith("# config_hash=")
    assert rows[1].startswith("# seed=")
    assert len(rows) == 3 + 3 * 1 * 2  # comments+header, 3 preds, 1 video
    plot_out = tmp_path / "plot"
    assert run("plot", "--report", str(ev_out), "--out",
               str(plot_out)) == 0
    assert (plot_out / "error_vs_s.png").stat().st_size > 0


def test_evaluate_without_checkpoint_exits_2(tmp_path, capsys):
    ds_dir = synth_small(tmp_path / "run")
    empty = tmp_path / "nothing"
    empty.mkdir()
    code = run("evaluate", "--dataset", ds_dir, "--predictors", "track",
               "--models", str(empty), "--out", str(tmp_path / "e"))
    assert code == 2
    assert "checkpoint" in capsys.readouterr().err
    code = run("evaluate", "--dataset", ds_dir, "--predictors",
               "pos-only", "--out", str(tmp_path / "e2"))
    assert code == 2


def test_evaluate_rejects_unknown_predictor(tmp_path, capsys):
    ds_dir = synth_small(tmp_path / "run")
    code = run("evaluate", "--dataset", ds_dir, "--predictors", "oracle",
               "--out", str(tmp_path / "e"))
    assert code == 2


def test_evaluate_needs_saliency_for_k_sal(tmp_path, capsys):
    ds_dir = synth_small(tmp_path / "run")
    code = run("evaluate", "--dataset", ds_dir, "--predictors",
               "k-sal:2", "--out", str(tmp_path / "e"))
    assert code == 2
    assert "saliency" in capsys.readouterr().err


def test_analyze_mi_rows(tmp_path):
    ds_dir = synth_small(tmp_path / "run")
    out = tmp_path / "mi"
    assert run("analyze", "mi", "--dataset", ds_dir, "--s-grid",
               "1.0,2.0", "--t-start", "0.0", "--out", str(out)) == 0
    rows = (out / "mi_by_lag.csv").read_text().splitlines()
    assert rows[2] == "video_id,s_seconds,mi_normalized"
    assert len(rows) == 3 + 2  # one video, two lags
    vals = [float(r.split(",")[2]) for r in rows[3:]]
    assert all(np.isfinite(vals))


def test_analyze_te_needs_saliency(tmp_path, capsys):
    ds_dir = synth_small(tmp_path / "run")
    assert run("analyze", "te", "--dataset", ds_dir, "--out",
               str(tmp_path / "te")) == 2
    run_dir = os.path.dirname(ds_dir)
    out = tmp_path / "te2"
    assert run("analyze", "te", "--dataset", ds_dir, "--saliency",
               os.path.join(run_dir, "saliency"), "--s-grid", "1.0",
               "--t-start", "0.0", "--out", str(out)) == 0
    rows = (out / "te_by_lag.csv").read_text().splitlines()
    assert rows[2] == "video_id,s_seconds,te_bits"


def test_config_file_defaults_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_videos": 1, "n_users": 1,
                               "duration": 8.0, "grid": "8x8",
                               "kind": "exploration"}))
    out = tmp_path / "a"
    assert run("synth", "--config", str(cfg), "--out", str(out)) == 0
    ds = load_dataset(os.path.join(out, "dataset"))
    assert len(ds.traces) == 1
    out2 = tmp_path / "b"
    assert run("synth", "--config", str(cfg), "--n-users", "2", "--out",
               str(out2)) == 0
    assert len(load_dataset(os.path.join(out2, "dataset")).traces) == 2


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("synth", "--config", str(bad), "--out",
               str(tmp_path / "x")) == 2
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"frobs": 3}))
    assert run("synth", "--config", str(unknown), "--out",
               str(tmp_path / "y")) == 2
    assert "frobs" in capsys.readouterr().err
    assert run("synth", "--config", str(tmp_path / "absent.json"),
               "--out", str(tmp_path / "z")) == 2


def test_repro_fig_rejects_unknown_name(tmp_path, capsys):
    assert run("repro-fig", "landscape", "--out", str(tmp_path)) == 2
    assert "landscape" in capsys.readouterr().err


def test_repro_fig_requires_out():
    assert run("repro-fig", "mi") == 2


def test_repro_fig_mi_end_to_end(tmp_path):
    out = tmp_path / "fig"
    assert run("repro-fig", "mi", "--seed", "5", "--out", str(out)) == 0
    assert (out / "fig_mi.png").stat().st_size > 0
    rows = (out / "mi_by_lag.csv").read_text().splitlines()
    assert rows[2] == "video_id,s_seconds,mi_normalized"
    assert len(rows) == 3 + 4 * 25  # four videos, 25 lags
    curve = [float(r.split(",")[2])
             for r in (out / "curves.csv").read_text().splitlines()[3:]]
    assert curve[0] > curve[-1]  # predictability decays with lag


def test_repro_fig_track_avg_end_to_end(tmp_path):
    out = tmp_path / "fig"
    assert run("repro-fig", "track-avg", "--desk-scale", "--seed", "2",
               "--out", str(out)) == 0
    assert (out / "fig_track_avg.png").stat().st_size > 0
    assert (out / "errors_by_step.csv").exists()
    with open(out / "run_manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["options"]["paper_scale"] is False
