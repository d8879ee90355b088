"""Shared finite-difference oracles for gradient checks."""

import numpy as np

FD_STEP = 1e-5


def rel_err(a, b, floor=1e-8):
    """Max elementwise relative disagreement between two arrays."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / (np.abs(a) + np.abs(b) + floor)))


def fd_param_grads(loss_fn, params, step=FD_STEP):
    """Central-difference gradient of loss_fn() w.r.t. each parameter array.

    loss_fn must re-run the forward pass from scratch, reading the live
    parameter arrays, and return a scalar.
    """
    out = {}
    for name, value, _ in params:
        g = np.zeros(value.shape, dtype=np.float64)
        flat_v = value.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_v.size):
            orig = flat_v[i]
            flat_v[i] = orig + step
            lp = loss_fn()
            flat_v[i] = orig - step
            lm = loss_fn()
            flat_v[i] = orig
            flat_g[i] = (lp - lm) / (2.0 * step)
        out[name] = g
    return out


def fd_input_grad(loss_fn, x, step=FD_STEP):
    """Central-difference gradient of loss_fn() w.r.t. the array x."""
    g = np.zeros(x.shape, dtype=np.float64)
    flat_x = x.reshape(-1)
    flat_g = g.reshape(-1)
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + step
        lp = loss_fn()
        flat_x[i] = orig - step
        lm = loss_fn()
        flat_x[i] = orig
        flat_g[i] = (lp - lm) / (2.0 * step)
    return g
