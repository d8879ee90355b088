import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hmb import info, synth
from hmb.dataset import Dataset, Trace
from hmb.saliency import SaliencySequence, gt_saliency_sequence
from hmb.sphere import grid_cell_vectors


def uniform_sphere(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_spherical_binner_tiles_the_sphere():
    b = info.SphericalBinner(128)
    assert b.ring_counts.sum() == 128
    assert (b.ring_counts >= 1).all()
    assert abs(b.solid_angles().sum() - 4 * math.pi) < 1e-9
    rng = np.random.default_rng(0)
    idx = b.bin(uniform_sphere(rng, 5000))
    assert idx.shape == (5000,)
    assert idx.min() >= 0 and idx.max() < 128
    poles = b.bin(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
                            [1.0, 0.0, 0.0]]))
    assert ((0 <= poles) & (poles < 128)).all()


@pytest.mark.parametrize("n_bins", [1, 2, 5, 32, 256])
def test_spherical_binner_small_sizes(n_bins):
    b = info.SphericalBinner(n_bins)
    assert b.ring_counts.sum() == n_bins
    assert (b.ring_counts >= 1).all()
    assert abs(b.solid_angles().sum() - 4 * math.pi) < 1e-9
    rng = np.random.default_rng(1)
    idx = b.bin(uniform_sphere(rng, 500))
    assert idx.min() >= 0 and idx.max() < n_bins


def test_spherical_binner_is_equal_area_empirically():
    # uniform directions should land uniformly across bins
    b = info.SphericalBinner(128)
    rng = np.random.default_rng(2)
    n = 200_000
    counts = np.bincount(b.bin(uniform_sphere(rng, n)), minlength=128)
    expected = n / 128
    assert np.abs(counts - expected).max() < 0.25 * expected


def test_scalar_binner_boundaries():
    b = info.ScalarBinner(4)
    vals = [0.0, 0.1, 0.25, 0.2500001, 0.5, 0.75, 0.99, 1.0]
    np.testing.assert_array_equal(b.bin(vals), [0, 0, 0, 1, 1, 2, 3, 3])
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        b.bin([1.1])
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        b.bin([-0.01])


@given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=2,
                max_size=50))
@settings(deadline=None)
def test_scalar_binner_monotone_in_range(vals):
    b = info.ScalarBinner(256)
    idx = b.bin(sorted(vals))
    assert ((0 <= idx) & (idx < 256)).all()
    assert (np.diff(idx) >= 0).all()


def test_entropy_of_known_values():
    assert info.entropy_of([7, 0, 0]) == 0.0
    assert abs(info.entropy_of([3, 3]) - 1.0) < 1e-12
    assert abs(info.entropy_of(np.ones(128)) - 7.0) < 1e-12
    with pytest.raises(ValueError, match="zero total"):
        info.entropy_of([0, 0])
    with pytest.raises(ValueError, match="nonnegative"):
        info.entropy_of([-1, 2])


def test_mi_from_joint_symmetry_and_bounds():
    rng = np.random.default_rng(3)
    for _ in range(20):
        joint = rng.integers(0, 9, size=(6, 7)).astype(float)
        if joint.sum() == 0:
            joint[0, 0] = 1
        mi = info.mutual_information_from_joint(joint)
        assert mi == info.mutual_information_from_joint(joint.T)
        hx = info.entropy_of(joint.sum(axis=1))
        hy = info.entropy_of(joint.sum(axis=0))
        assert -1e-12 <= mi <= min(hx, hy) + 1e-12


def _static_dataset(rng, n_users=6, n=40, dt=0.2):
    traces = [
        Trace("v00", f"u{j}", dt,
              np.tile(uniform_sphere(rng, 1)[0], (n, 1)))
        for j in range(n_users)
    ]
    return Dataset(traces=traces,
                   video_durations={"v00": (n - 1) * dt})


def test_mi_is_one_for_frozen_users():
    ds = _static_dataset(np.random.default_rng(4))
    per_video, avg = info.mutual_information(ds, s=1.0, normalize=True)
    assert abs(per_video["v00"] - 1.0) < 1e-9
    assert abs(avg - 1.0) < 1e-9
    per_raw, _ = info.mutual_information(ds, s=1.0, normalize=False)
    assert per_raw["v00"] > 0.5  # six distinct spots carry real entropy


def test_mi_near_zero_for_independent_uniform_positions():
    rng = np.random.default_rng(5)
    n = 100_025
    tr = Trace("v00", "u0", 0.2, uniform_sphere(rng, n))
    ds = Dataset(traces=[tr], video_durations={"v00": (n - 1) * 0.2})
    per_video, avg = info.mutual_information(ds, s=5.0, normalize=True,
                                             t_start=0.0)
    assert avg < 0.05
    assert per_video["v00"] == avg


def test_mi_decreases_with_lag_on_exploration():
    ds, _, _ = synth.synth_generate("exploration", n_videos=2, n_users=5,
                                    duration_s=30.0, seed=7)
    avgs = [info.mutual_information(ds, s)[1]
            for s in (0.2, 1.0, 2.0, 3.0, 5.0)]
    assert all(b <= a + 0.02 for a, b in zip(avgs, avgs[1:]))
    assert avgs[-1] < avgs[0]


def test_mi_errors_without_pairs():
    rng = np.random.default_rng(6)
    tr = Trace("v00", "u0", 0.2, uniform_sphere(rng, 10))
    ds = Dataset(traces=[tr], video_durations={"v00": 1.8})
    with pytest.raises(ValueError, match="no valid pairs"):
        info.mutual_information(ds, s=5.0, t_start=0.0)
    with pytest.raises(ValueError, match="multiple"):
        info.mutual_information(ds, s=0.3, t_start=0.0)


def _walk_dataset(rng, n_videos=2, n_users=3, n=60, dt=0.2):
    traces = []
    durs = {}
    for vi in range(n_videos):
        vid = f"v{vi:02d}"
        durs[vid] = (n - 1) * dt
        for uj in range(n_users):
            ang = rng.uniform(0, 2 * math.pi) + 0.4 * dt * np.arange(n)
            phi = rng.uniform(-0.8, 0.8)
            samples = np.stack([
                np.cos(ang) * math.cos(phi),
                np.sin(ang) * math.cos(phi),
                np.full(n, math.sin(phi)),
            ], axis=1)
            traces.append(Trace(vid, f"u{uj}", dt, samples))
    return Dataset(traces=traces, video_durations=durs)


def test_te_is_exactly_zero_for_uniform_maps():
    rng = np.random.default_rng(8)
    ds = _walk_dataset(rng)
    sal = {vid: SaliencySequence(maps=np.full((60, 6, 8), 0.37), dt=0.2)
           for vid in ds.video_ids}
    per_video, avg = info.transfer_entropy(ds, sal, s=1.0)
    assert per_video == {"v00": 0.0, "v01": 0.0}
    assert avg == 0.0


def test_te_recovers_conditional_entropy_when_maps_encode_the_future():
    # delta maps whose argmax sits at the viewer's future cell make V a
    # deterministic code for P_{t+s}, so TE should equal H(P'|P) exactly
    h, w = 6, 8
    centers = grid_cell_vectors(w, h).reshape(-1, 3)
    rng = np.random.default_rng(9)
    n = 4000
    cells = rng.integers(0, h * w, size=n)
    samples = centers[cells]
    tr = Trace("v00", "u0", 0.2, samples)
    ds = Dataset(traces=[tr], video_durations={"v00": (n - 1) * 0.2})
    maps = np.zeros((n, h, w))
    maps[np.arange(n), cells // w, cells % w] = 1.0
    sal = {"v00": SaliencySequence(maps=maps, dt=0.2)}
    s = 1.0
    per_video, _ = info.transfer_entropy(ds, sal, s, mode="argmax",
                                         t_start=0.0)
    binner = info.SphericalBinner()
    k = 5
    first = 0
    ia = binner.bin(samples[first:n - k])
    ib = binner.bin(samples[first + k:])
    joint = np.zeros((binner.n_bins, binner.n_bins))
    np.add.at(joint, (ia, ib), 1.0)
    h_cond = info.entropy_of(joint) - info.entropy_of(joint.sum(axis=1))
    assert h_cond > 3.0  # the future really is uncertain given the past
    assert abs(per_video["v00"] - h_cond) < 1e-9


def test_te_grows_with_lag_on_content_driven_viewers():
    ds, _, _ = synth.synth_generate("static_focus", n_videos=2, n_users=5,
                                    duration_s=30.0, seed=3)
    sal = {vid: gt_saliency_sequence(ds, vid, grid=(18, 36))
           for vid in ds.video_ids}
    avgs = [info.transfer_entropy(ds, sal, s)[1]
            for s in (0.2, 1.0, 3.0, 5.0)]
    assert all(b >= a - 0.05 for a, b in zip(avgs, avgs[1:]))
    assert avgs[-1] > avgs[0]


def test_te_modes_and_errors():
    rng = np.random.default_rng(10)
    ds = _walk_dataset(rng, n_videos=1)
    maps = rng.random((60, 6, 8))
    sal = {"v00": SaliencySequence(maps=maps, dt=0.2)}
    for mode in ("value", "argmax"):
        per_video, avg = info.transfer_entropy(ds, sal, 1.0, mode=mode)
        assert np.isfinite(avg) and avg >= 0.0
    with pytest.raises(ValueError, match="mode"):
        info.transfer_entropy(ds, sal, 1.0, mode="norm")
    with pytest.raises(ValueError, match="no saliency"):
        info.transfer_entropy(ds, {}, 1.0)
    bad_dt = {"v00": SaliencySequence(maps=maps, dt=0.1)}
    with pytest.raises(ValueError, match="dt"):
        info.transfer_entropy(ds, bad_dt, 1.0)
    short = {"v00": SaliencySequence(maps=maps[:30], dt=0.2)}
    with pytest.raises(ValueError, match="cover"):
        info.transfer_entropy(ds, short, 1.0)
