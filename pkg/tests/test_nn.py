"""Gradient, optimizer, loss and checkpoint contracts for the neural core.

Every backward pass is checked against central finite differences computed
from the forward pass alone, in float64 with step 1e-5.  The FD values are
the oracle; analytic gradients must match them element-wise.
"""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from hmb import nn

from conftest import fd_input_grad, fd_param_grads, rel_err


# ---------------------------------------------------------------- dense


@pytest.mark.parametrize("activation,tol", [
    ("linear", 1e-6), ("tanh", 1e-6), ("relu", 1e-5)])
def test_dense_gradcheck(activation, tol):
    rng = np.random.default_rng(7)
    layer = nn.Dense(4, 3, activation, rng=rng, name="d",
                     dtype=np.float64)
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, 3))

    def loss_fn():
        layer.begin()
        y = layer.step(x)
        return float(np.mean((y - target) ** 2))

    layer.begin()
    y = layer.step(x)
    dy = 2.0 * (y - target) / y.size
    layer.zero_grads()
    dx = layer.step_backward(dy)

    fd_p = fd_param_grads(loss_fn, layer.parameters())
    for name, _, grad in layer.parameters():
        assert rel_err(grad, fd_p[name]) < tol, name
    assert rel_err(dx, fd_input_grad(loss_fn, x)) < tol


def test_dense_zero_weights_zero_output():
    rng = np.random.default_rng(0)
    layer = nn.Dense(4, 3, "relu", rng=rng, name="d")
    layer.W[...] = 0
    out = layer.step(rng.normal(size=(2, 4)).astype(np.float32))
    npt.assert_array_equal(out, np.zeros((2, 3), dtype=np.float32))


def test_dense_rejects_unknown_activation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        nn.Dense(2, 2, "gelu", rng=rng, name="d")


# ---------------------------------------------------------------- lstm


def _run_stack_loss(stack, xs, target):
    stack.begin(xs.shape[0])
    outs = [stack.step(xs[:, k]) for k in range(xs.shape[1])]
    pred = np.stack(outs, axis=1)
    return float(np.mean((pred - target) ** 2)), pred


def test_lstm_stack_gradcheck():
    """Analytic BPTT grads match finite differences, max rel err < 1e-4."""
    rng = np.random.default_rng(11)
    stack = nn.LstmStack(3, 5, depth=2, rng=rng, name="s",
                         dtype=np.float64)
    xs = rng.normal(size=(2, 4, 3))
    target = rng.normal(size=(2, 4, 5))

    def loss_fn():
        return _run_stack_loss(stack, xs, target)[0]

    loss, pred = _run_stack_loss(stack, xs, target)
    dpred = 2.0 * (pred - target) / pred.size
    stack.zero_grads()
    stack.begin_backward(xs.shape[0])
    dxs = np.zeros_like(xs)
    for k in range(xs.shape[1] - 1, -1, -1):
        dxs[:, k] = stack.step_backward(dpred[:, k])

    fd_p = fd_param_grads(loss_fn, stack.parameters())
    worst = 0.0
    for name, _, grad in stack.parameters():
        worst = max(worst, rel_err(grad, fd_p[name]))
    assert worst < 1e-4
    assert rel_err(dxs, fd_input_grad(loss_fn, xs)) < 1e-4


def test_lstm_zero_weights_zero_output():
    rng = np.random.default_rng(3)
    stack = nn.LstmStack(3, 4, depth=2, rng=rng, name="s")
    for _, value, _ in stack.parameters():
        value[...] = 0
    stack.begin(2)
    for _ in range(3):
        out = stack.step(np.ones((2, 3), dtype=np.float32))
    npt.assert_array_equal(out, np.zeros((2, 4), dtype=np.float32))


def test_lstm_forget_bias_starts_at_one():
    rng = np.random.default_rng(3)
    cell = nn.LstmCell(3, 4, rng=rng, name="c")
    npt.assert_array_equal(cell.b[:4], 0)
    npt.assert_array_equal(cell.b[4:8], 1)
    npt.assert_array_equal(cell.b[8:], 0)


def test_stack_composition_matches_manual_cells():
    """An L-layer stack is exactly cell_0 feeding cell_1 feeding ..."""
    rng = np.random.default_rng(5)
    stack = nn.LstmStack(3, 4, depth=3, rng=rng, name="s")
    xs = rng.normal(size=(2, 6, 3)).astype(np.float32)

    stack.begin(2)
    got = np.stack([stack.step(xs[:, k]) for k in range(6)], axis=1)

    states = [(np.zeros((2, 4), np.float32), np.zeros((2, 4), np.float32))
              for _ in stack.cells]
    outs = []
    for k in range(6):
        inp = xs[:, k]
        for j, cell in enumerate(stack.cells):
            h, c = cell.step(inp, *states[j])
            states[j] = (h, c)
            inp = h
        outs.append(inp)
    npt.assert_array_equal(got, np.stack(outs, axis=1))


def test_forward_backward_bit_deterministic():
    def run():
        rng = np.random.default_rng(21)
        stack = nn.LstmStack(3, 8, depth=2, rng=rng, name="s")
        xs = rng.normal(size=(4, 5, 3)).astype(np.float32)
        stack.begin(4)
        outs = [stack.step(xs[:, k]) for k in range(5)]
        pred = np.stack(outs, axis=1)
        stack.zero_grads()
        stack.begin_backward(4)
        for k in range(4, -1, -1):
            stack.step_backward(pred[:, k].copy())
        return pred, {n: g.copy() for n, _, g in stack.parameters()}

    p1, g1 = run()
    p2, g2 = run()
    npt.assert_array_equal(p1, p2)
    for name in g1:
        npt.assert_array_equal(g1[name], g2[name])


def test_state_handoff_round_trip():
    rng = np.random.default_rng(9)
    stack = nn.LstmStack(2, 3, depth=2, rng=rng, name="s")
    xs = rng.normal(size=(1, 4, 2)).astype(np.float32)
    stack.begin(1)
    for k in range(4):
        stack.step(xs[:, k])
    snap = stack.get_state()
    after_snap = stack.step(xs[:, 0])
    stack.set_state(snap)
    npt.assert_array_equal(stack.step(xs[:, 0]), after_snap)


# ---------------------------------------------------------------- mlp


def test_mlp_gradcheck():
    rng = np.random.default_rng(13)
    mlp = nn.Mlp([4, 6, 3], ["relu", "linear"], rng=rng, name="m",
                 dtype=np.float64)
    xs = rng.normal(size=(2, 3, 4))
    target = rng.normal(size=(2, 3, 3))

    def loss_fn():
        mlp.begin()
        pred = np.stack([mlp.step(xs[:, k]) for k in range(3)], axis=1)
        return float(np.mean((pred - target) ** 2))

    mlp.begin()
    pred = np.stack([mlp.step(xs[:, k]) for k in range(3)], axis=1)
    dpred = 2.0 * (pred - target) / pred.size
    mlp.zero_grads()
    mlp.begin_backward()
    for k in range(2, -1, -1):
        mlp.step_backward(dpred[:, k])

    fd_p = fd_param_grads(loss_fn, mlp.parameters())
    for name, _, grad in mlp.parameters():
        assert rel_err(grad, fd_p[name]) < 1e-5, name


def test_mlp_requires_matching_activations():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        nn.Mlp([4, 6, 3], ["relu"], rng=rng, name="m")


# ---------------------------------------------------------------- loss


def test_mse_xyz_loss_shifted_value():
    # constant +delta on x only: mean square is delta^2 / 3
    delta = 0.3
    target = np.zeros((2, 5, 3))
    pred = target.copy()
    pred[..., 0] += delta
    loss, _ = nn.mse_xyz_loss(pred, target)
    npt.assert_allclose(loss, delta ** 2 / 3.0, rtol=1e-12)


def test_mse_xyz_loss_gradcheck():
    rng = np.random.default_rng(17)
    pred = rng.normal(size=(3, 4, 3))
    target = rng.normal(size=(3, 4, 3))
    _, grad = nn.mse_xyz_loss(pred, target)

    def loss_fn():
        return nn.mse_xyz_loss(pred, target)[0]

    assert rel_err(grad, fd_input_grad(loss_fn, pred)) < 1e-6


def test_mse_xyz_loss_rejects_bad_input():
    with pytest.raises(ValueError):
        nn.mse_xyz_loss(np.zeros((2, 3)), np.zeros((3, 3)))
    with pytest.raises(ValueError):
        nn.mse_xyz_loss(np.zeros((0, 3)), np.zeros((0, 3)))


@given(scale=st.floats(min_value=1e-3, max_value=1e3),
       seed=st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_mse_xyz_loss_quadratic_scaling(scale, seed):
    # scaling the residual by c scales the loss by c^2
    rng = np.random.default_rng(seed)
    target = rng.normal(size=(2, 3, 3))
    resid = rng.normal(size=(2, 3, 3))
    base, _ = nn.mse_xyz_loss(target + resid, target)
    scaled, _ = nn.mse_xyz_loss(target + scale * resid, target)
    npt.assert_allclose(scaled, scale ** 2 * base, rtol=1e-9)


# ---------------------------------------------------------------- adam


def test_adam_zero_grad_leaves_value_unchanged():
    value = np.array([1.0, -2.0, 3.0])
    before = value.copy()
    opt = nn.Adam(lr=0.1)
    opt.step([("w", value, np.zeros(3))])
    npt.assert_array_equal(value, before)


def test_adam_moves_against_gradient_sign():
    value = np.array([1.0, 1.0])
    opt = nn.Adam(lr=0.05)
    opt.step([("w", value, np.array([2.0, -2.0]))])
    assert value[0] < 1.0 and value[1] > 1.0


def test_adam_quadratic_descent_monotone_after_warmup():
    # minimize (x - 3)^2 from 0; every post-warmup step must lower the loss
    value = np.array([0.0])
    opt = nn.Adam(lr=0.01)
    losses = []
    for _ in range(200):
        grad = 2.0 * (value - 3.0)
        losses.append(float((value[0] - 3.0) ** 2))
        opt.step([("x", value, grad)])
    losses.append(float((value[0] - 3.0) ** 2))
    for k in range(10, 200):
        assert losses[k + 1] < losses[k]
    assert losses[-1] < losses[0] / 4


def test_adam_names_tensor_on_nan_gradient():
    value = np.zeros(2)
    opt = nn.Adam()
    with pytest.raises(FloatingPointError, match="fusion.Wx"):
        opt.step([("ok", np.zeros(2), np.zeros(2)),
                  ("fusion.Wx", value, np.array([np.nan, 0.0]))])


def test_adam_update_matches_reference_first_step():
    # after one step from zero state the update is exactly -lr * sign(g)
    # scaled by g/|g| bias-corrected: m_hat = g, v_hat = g^2, so
    # value -= lr * g / (|g| + eps)
    value = np.array([0.5, -0.25])
    grad = np.array([0.2, -0.4])
    m = np.zeros(2)
    v = np.zeros(2)
    nn.adam_update(value, grad, m, v, t=1, lr=0.01)
    expected = np.array([0.5, -0.25]) - 0.01 * grad / (np.abs(grad) + 1e-8)
    npt.assert_allclose(value, expected, rtol=1e-9)


# ------------------------------------------------------------ checkpoint


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    params = {"enc.l0.Wx": rng.normal(size=(3, 16)).astype(np.float32),
              "head.b": rng.normal(size=(4,)).astype(np.float32)}
    cfg = {"epochs": 5, "lr": 5e-4, "units": 8}
    path = tmp_path / "model.npz"
    nn.save_checkpoint(path, "track", params, cfg, "abc123")
    ck = nn.load_checkpoint(path)
    assert ck.model_kind == "track"
    assert ck.train_config == cfg
    assert ck.dataset_fingerprint == "abc123"
    assert set(ck.params) == set(params)
    for name in params:
        npt.assert_array_equal(ck.params[name], params[name])


def test_checkpoint_rejects_wrong_version(tmp_path):
    import json
    meta = json.dumps({"format_version": 99, "model_kind": "x",
                       "train_config": {}, "dataset_fingerprint": ""})
    path = tmp_path / "bad.npz"
    np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8))
    with pytest.raises(ValueError, match="version"):
        nn.load_checkpoint(path)


def test_checkpoint_rejects_missing_metadata(tmp_path):
    path = tmp_path / "plain.npz"
    np.savez(path, w=np.zeros(3))
    with pytest.raises(ValueError, match="metadata"):
        nn.load_checkpoint(path)


def test_checkpoint_reserved_name_rejected(tmp_path):
    with pytest.raises(ValueError, match="reserved"):
        nn.save_checkpoint(tmp_path / "x.npz", "k",
                           {"__meta__": np.zeros(1)}, {}, "")


def test_restore_into_rejects_shape_mismatch():
    rng = np.random.default_rng(2)
    layer = nn.Dense(3, 4, rng=rng, name="d")
    stored = {"d.W": np.zeros((3, 5), np.float32),
              "d.b": np.zeros(4, np.float32)}
    with pytest.raises(ValueError, match="shape mismatch"):
        nn.restore_into(layer.parameters(), stored)


def test_restore_into_rejects_name_mismatch():
    rng = np.random.default_rng(2)
    layer = nn.Dense(3, 4, rng=rng, name="d")
    with pytest.raises(ValueError, match="name mismatch"):
        nn.restore_into(layer.parameters(), {"other.W": np.zeros((3, 4))})


def test_restore_into_copies_values():
    rng = np.random.default_rng(2)
    layer = nn.Dense(2, 2, rng=rng, name="d")
    stored = {"d.W": np.full((2, 2), 7.0, np.float32),
              "d.b": np.full(2, -1.0, np.float32)}
    nn.restore_into(layer.parameters(), stored)
    npt.assert_array_equal(layer.W, stored["d.W"])
    npt.assert_array_equal(layer.b, stored["d.b"])
