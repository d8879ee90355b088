"""Training loss on raw xyz outputs."""

import numpy as np

__all__ = ["mse_xyz_loss"]


def mse_xyz_loss(pred, target):
    """Mean squared error over every step and coordinate.

    pred, target: (..., H, 3) arrays of un-normalized xyz outputs.  The
    outputs are compared as-is: no renormalization happens inside the loss.
    Returns (loss, grad) with ``loss`` a python float (mean over all
    elements) and ``grad`` the gradient w.r.t. pred, same shape.
    """
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction")
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad
