"""Versioned model checkpoints: one npz holding weights plus a JSON header."""

import json
import dataclasses

import numpy as np

__all__ = ["FORMAT_VERSION", "Checkpoint", "save_checkpoint",
           "load_checkpoint", "restore_into"]

FORMAT_VERSION = 1
_META_KEY = "__meta__"


@dataclasses.dataclass
class Checkpoint:
    model_kind: str
    params: dict
    train_config: dict
    dataset_fingerprint: str


def save_checkpoint(path, model_kind, params, train_config,
                    dataset_fingerprint):
    """Write weights and metadata to one .npz file.

    params: {name: array}.  train_config must be JSON-serializable.
    """
    if _META_KEY in params:
        raise ValueError(f"parameter name {_META_KEY!r} is reserved")
    meta = json.dumps({
        "format_version": FORMAT_VERSION,
        "model_kind": model_kind,
        "train_config": train_config,
        "dataset_fingerprint": dataset_fingerprint,
    })
    payload = {_META_KEY: np.frombuffer(meta.encode("utf-8"), dtype=np.uint8)}
    payload.update(params)
    np.savez(path, **payload)


def load_checkpoint(path):
    with np.load(path) as data:
        if _META_KEY not in data:
            raise ValueError(f"{path}: not a checkpoint (missing metadata)")
        meta = json.loads(bytes(data[_META_KEY]).decode("utf-8"))
        version = meta.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint version {version!r} "
                f"(expected {FORMAT_VERSION})")
        params = {k: data[k] for k in data.files if k != _META_KEY}
    return Checkpoint(model_kind=meta["model_kind"], params=params,
                      train_config=meta["train_config"],
                      dataset_fingerprint=meta["dataset_fingerprint"])


def restore_into(layer_params, checkpoint_params):
    """Copy checkpoint arrays into live parameter arrays by name.

    layer_params: iterable of (name, value, grad) as produced by a model's
    ``parameters()``.  Rejects missing names and shape mismatches.
    """
    live = {name: value for name, value, _ in layer_params}
    missing = sorted(set(live) - set(checkpoint_params))
    extra = sorted(set(checkpoint_params) - set(live))
    if missing or extra:
        raise ValueError(
            f"parameter name mismatch: missing {missing}, unexpected {extra}")
    for name, value in live.items():
        stored = checkpoint_params[name]
        if stored.shape != value.shape:
            raise ValueError(
                f"shape mismatch for {name}: checkpoint {stored.shape}, "
                f"model {value.shape}")
        value[...] = stored.astype(value.dtype)
