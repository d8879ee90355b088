"""Minimal deterministic neural substrate: LSTM stacks, dense layers,
Adam, the xyz mean-squared loss, and a versioned checkpoint container.

Everything is plain numpy with hand-derived backward passes.  Layers store
f32 parameters by default and accept ``dtype=np.float64`` for gradient
checking; forward caches are explicit LIFO stacks so the same layer object
can run through an autoregressive decode loop and be backpropagated in
reverse order.
"""

from .layers import Dense, LstmCell, LstmStack, Mlp, glorot_uniform
from .loss import mse_xyz_loss
from .optim import Adam, adam_update
from .checkpoint import load_checkpoint, restore_into, save_checkpoint

__all__ = [
    "Dense",
    "LstmCell",
    "LstmStack",
    "Mlp",
    "glorot_uniform",
    "mse_xyz_loss",
    "Adam",
    "adam_update",
    "save_checkpoint",
    "load_checkpoint",
    "restore_into",
]
