"""Sequence-to-sequence head-motion predictors over position and saliency.

All architectures share one scaffold: an encoder phase consumes the M
history positions (and, for content-aware models, the contemporaneous
saliency maps), then an autoregressive decoder emits H per-step
displacements, each added to the previous position.  The network therefore
predicts motion, not absolute position: zeroing the final layer reproduces
the no-motion baseline exactly.  Outputs stay un-normalized through
training; projection onto the unit sphere happens only in ``predict_batch``.

The decoder feeds its raw previous output back as the next position input,
consuming saliency maps strictly in step order, so the prediction at step k
never depends on maps beyond t+k.
"""

import dataclasses
import hashlib
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import nn
from .dataset import Dataset, WindowSpec, windows

__all__ = [
    "TrainConfig",
    "Seq2SeqModel",
    "PosOnlyModel",
    "TrackModel",
    "AblatSalModel",
    "AblatFuseModel",
    "Cvpr18ImprovedModel",
    "Mm18ImprovedModel",
    "MODEL_KINDS",
    "build_model",
    "ablate",
    "zero_output_layer",
    "train_model",
    "window_saliency_slice",
    "save_model",
    "load_model",
    "dataset_fingerprint",
]


def _standardize_flat(flat: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Per-map mean/std normalization over the pixel axis, stats in f64."""
    x = flat.astype(np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    std = x.std(axis=-1, keepdims=True)
    return (x - mean) / (std + eps)


@dataclasses.dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 5e-4
    seed: int = 0
    window: WindowSpec = dataclasses.field(default_factory=WindowSpec)
    max_windows: Optional[int] = None
    scheduled_sampling: float = 0.0

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return d


class Seq2SeqModel:
    """Shared encoder/decoder driver; subclasses wire the per-step cell.

    Subclasses define ``_build`` (create layers, return them as the module
    list), ``_step`` (one cell evaluation; returns the displacement when
    decoding, None while encoding) and ``_step_backward`` (reverse of one
    cell evaluation; receives the displacement gradient or None and returns
    the gradient w.r.t. the position input).
    """

    kind = "abstract"
    uses_saliency = True

    def __init__(self, units: int = 64, grid: Tuple[int, int] = (64, 64),
                 seed: int = 0, dtype=np.float32,
                 encoder_saliency: str = "contemporaneous"):
        if encoder_saliency not in ("contemporaneous", "zeros"):
            raise ValueError(f"unknown encoder_saliency {encoder_saliency!r}")
        self.units = units
        self.grid = (int(grid[0]), int(grid[1]))
        self.dtype = np.dtype(dtype)
        self.encoder_saliency = encoder_saliency
        self.trained = False
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        self._modules = self._build(rng)
        self._batch = 0
        self._shape: Tuple[int, int, int] = (0, 0, 0)
        self._teacher_fed: List[bool] = []

    # subclass hooks ---------------------------------------------------

    def _build(self, rng) -> list:
        raise NotImplementedError

    def _step(self, pos, sal, decode: bool):
        raise NotImplementedError

    def _step_backward(self, d_delta, decode: bool):
        raise NotImplementedError

    # shared driver ----------------------------------------------------

    def _prepare_saliency(self, saliency, m_history: int, horizon: int,
                          batch: int):
        """Split one (B, L, h, w) map tensor into encoder/decoder inputs.

        L = M+H covers t-M+1..t+H; L = H covers the decoder only, implying
        zero maps during encoding.
        """
        h, w = self.grid
        s_dim = h * w
        if not self.uses_saliency:
            none = [None] * m_history, [None] * horizon
            return none
        if saliency is None:
            raise ValueError(f"{self.kind} requires saliency maps")
        maps = np.asarray(saliency)
        if maps.ndim != 4 or maps.shape[0] != batch:
            raise ValueError("saliency must have shape (batch, steps, h, w)")
        if maps.shape[2:] != (h, w):
            raise ValueError(
                f"saliency grid {maps.shape[2:]} does not match model "
                f"grid {(h, w)}")
        length = maps.shape[1]
        flat = _standardize_flat(
            maps.reshape(batch, length, s_dim)).astype(self.dtype)
        zeros = np.zeros((batch, s_dim), dtype=self.dtype)
        if length == m_history + horizon:
            if self.encoder_saliency == "contemporaneous":
                enc = [flat[:, m] for m in range(m_history)]
            else:
                enc = [zeros] * m_history
            dec = [flat[:, m_history + k] for k in range(horizon)]
        elif length == horizon:
            enc = [zeros] * m_history
            dec = [flat[:, k] for k in range(horizon)]
        else:
            raise ValueError(
                f"saliency length {length} is neither horizon {horizon} nor "
                f"history+horizon {m_history + horizon}")
        return enc, dec

    def forward(self, history, saliency=None, horizon: Optional[int] = None,
                teacher=None, sample_p: float = 0.0, rng=None) -> np.ndarray:
        """Run encoder + decoder, returning raw (B, H, 3) positions.

        teacher/sample_p implement scheduled sampling: with probability
        sample_p a decoder step reads the ground-truth previous position
        instead of its own last output.  Off by default.
        """
        history = np.asarray(history, dtype=self.dtype)
        if history.ndim != 3 or history.shape[2] != 3:
            raise ValueError("history must have shape (batch, m, 3)")
        batch, m_history = history.shape[0], history.shape[1]
        if horizon is None:
            if teacher is None:
                raise ValueError("horizon required")
            horizon = np.asarray(teacher).shape[1]
        if sample_p > 0.0 and (teacher is None or rng is None):
            raise ValueError("scheduled sampling needs teacher and rng")
        enc_sal, dec_sal = self._prepare_saliency(saliency, m_history,
                                                  horizon, batch)
        self._batch = batch
        self._shape = (batch, m_history, horizon)
        self._teacher_fed = [False] * horizon
        for mod in self._modules:
            mod.begin(batch)
        for m in range(m_history):
            self._step(history[:, m], enc_sal[m], decode=False)
        prev = history[:, -1]
        outs = np.empty((batch, horizon, 3), dtype=self.dtype)
        for k in range(horizon):
            delta = self._step(prev, dec_sal[k], decode=True)
            outs[:, k] = prev + delta
            if k + 1 < horizon:
                if sample_p > 0.0 and rng.random() < sample_p:
                    prev = np.asarray(teacher[:, k], dtype=self.dtype)
                    self._teacher_fed[k + 1] = True
                else:
                    prev = outs[:, k]
        return outs

    def backward(self, d_outs) -> None:
        """Accumulate parameter gradients for the last forward pass."""
        batch, m_history, horizon = self._shape
        d_outs = np.asarray(d_outs, dtype=self.dtype)
        for mod in self._modules:
            mod.begin_backward(batch)
        carry = np.zeros((batch, 3), dtype=self.dtype)
        for k in range(horizon - 1, -1, -1):
            d_out = d_outs[:, k] + carry
            d_pos = self._step_backward(d_out, decode=True)
            if k > 0 and self._teacher_fed[k]:
                carry = np.zeros((batch, 3), dtype=self.dtype)
            else:
                # out_{k-1} fed step k both as residual base and cell input
                carry = d_out + d_pos
        for _ in range(m_history):
            self._step_backward(None, decode=False)

    def predict_batch(self, history, saliency=None,
                      horizon: int = 25) -> np.ndarray:
        """Inference: forward pass plus projection onto the unit sphere."""
        outs = self.forward(history, saliency, horizon).astype(np.float64)
        norms = np.linalg.norm(outs, axis=-1, keepdims=True)
        return outs / np.maximum(norms, 1e-12)

    def parameters(self):
        out = []
        for mod in self._modules:
            out.extend(mod.parameters())
        return out

    def zero_grads(self):
        for mod in self._modules:
            mod.zero_grads()

    def _zeros_u(self):
        return np.zeros((self._batch, self.units), dtype=self.dtype)


class PosOnlyModel(Seq2SeqModel):
    """Position-only seq2seq: doubly-stacked LSTM plus the two-layer head."""

    kind = "pos-only"
    uses_saliency = False

    def _build(self, rng):
        u = self.units
        self.rnn = nn.LstmStack(3, u, 2, rng=rng, name="position",
                                dtype=self.dtype)
        self.head = nn.Dense(u, u, "relu", rng=rng, name="head.hidden",
                             dtype=self.dtype)
        self.out = nn.Dense(u, 3, "linear", rng=rng, name="head.out",
                            dtype=self.dtype)
        return [self.rnn, self.head, self.out]

    def _step(self, pos, sal, decode):
        h = self.rnn.step(pos)
        if decode:
            return self.out.step(self.head.step(h))
        return None

    def _step_backward(self, d_delta, decode):
        if decode:
            dh = self.head.step_backward(self.out.step_backward(d_delta))
        else:
            dh = self._zeros_u()
        return self.rnn.step_backward(dh)


class TrackModel(Seq2SeqModel):
    """Three-branch network: inertia RNN and content RNN feeding a fusion
    RNN over their concatenated outputs, then the two-layer head."""

    kind = "track"
    uses_saliency = True

    def _content_module(self, rng, s_dim, u):
        return nn.LstmStack(s_dim, u, 2, rng=rng, name="content",
                            dtype=self.dtype)

    def _fusion_module(self, rng, u):
        return nn.LstmStack(2 * u, u, 2, rng=rng, name="fusion",
                            dtype=self.dtype)

    def _build(self, rng):
        u = self.units
        s_dim = self.grid[0] * self.grid[1]
        self.inertia = nn.LstmStack(3, u, 2, rng=rng, name="inertia",
                                    dtype=self.dtype)
        self.content = self._content_module(rng, s_dim, u)
        self.fusion = self._fusion_module(rng, u)
        self.head = nn.Dense(u, u, "relu", rng=rng, name="head.hidden",
                             dtype=self.dtype)
        self.out = nn.Dense(u, 3, "linear", rng=rng, name="head.out",
                            dtype=self.dtype)
        return [self.inertia, self.content, self.fusion, self.head, self.out]

    def _step(self, pos, sal, decode):
        hi = self.inertia.step(pos)
        hc = self.content.step(sal)
        hf = self.fusion.step(np.concatenate([hi, hc], axis=1))
        if decode:
            return self.out.step(self.head.step(hf))
        return None

    def _step_backward(self, d_delta, decode):
        u = self.units
        if decode:
            dhf = self.head.step_backward(self.out.step_backward(d_delta))
        else:
            dhf = self._zeros_u()
        dcat = self.fusion.step_backward(dhf)
        self.content.step_backward(dcat[:, u:])
        return self.inertia.step_backward(dcat[:, :u])


class AblatSalModel(TrackModel):
    """TRACK with the content RNN swapped for two per-step dense layers."""

    kind = "track-ablat-sal"

    def _content_module(self, rng, s_dim, u):
        return nn.Mlp([s_dim, u, u], ["relu", "relu"], rng=rng,
                      name="content", dtype=self.dtype)


class AblatFuseModel(TrackModel):
    """TRACK with the fusion RNN swapped for two per-step dense layers."""

    kind = "track-ablat-fuse"

    def _fusion_module(self, rng, u):
        return nn.Mlp([2 * u, u, u], ["relu", "relu"], rng=rng,
                      name="fusion", dtype=self.dtype)


class Cvpr18ImprovedModel(Seq2SeqModel):
    """Position RNN only; saliency joins through a dense fusion layer."""

    kind = "cvpr18i"
    uses_saliency = True

    def _build(self, rng):
        u = self.units
        s_dim = self.grid[0] * self.grid[1]
        self.rnn = nn.LstmStack(3, u, 2, rng=rng, name="position",
                                dtype=self.dtype)
        self.fusion = nn.Dense(u + s_dim, u, "relu", rng=rng, name="fusion",
                               dtype=self.dtype)
        self.head = nn.Dense(u, u, "relu", rng=rng, name="head.hidden",
                             dtype=self.dtype)
        self.out = nn.Dense(u, 3, "linear", rng=rng, name="head.out",
                            dtype=self.dtype)
        return [self.rnn, self.fusion, self.head, self.out]

    def _step(self, pos, sal, decode):
        h = self.rnn.step(pos)
        if decode:
            z = self.fusion.step(np.concatenate([h, sal], axis=1))
            return self.out.step(self.head.step(z))
        return None

    def _step_backward(self, d_delta, decode):
        u = self.units
        if decode:
            dz = self.head.step_backward(self.out.step_backward(d_delta))
            dh = self.fusion.step_backward(dz)[:, :u]
        else:
            dh = self._zeros_u()
        return self.rnn.step_backward(dh)


class Mm18ImprovedModel(Seq2SeqModel):
    """One recurrent path over the concatenated (saliency, position) input."""

    kind = "mm18i"
    uses_saliency = True

    def _build(self, rng):
        u = self.units
        s_dim = self.grid[0] * self.grid[1]
        self.rnn = nn.LstmStack(s_dim + 3, u, 2, rng=rng, name="fusion",
                                dtype=self.dtype)
        self.out = nn.Dense(u, 3, "linear", rng=rng, name="head.out",
                            dtype=self.dtype)
        return [self.rnn, self.out]

    def _step(self, pos, sal, decode):
        h = self.rnn.step(np.concatenate([sal, pos], axis=1))
        if decode:
            return self.out.step(h)
        return None

    def _step_backward(self, d_delta, decode):
        s_dim = self.grid[0] * self.grid[1]
        if decode:
            dh = self.out.step_backward(d_delta)
        else:
            dh = self._zeros_u()
        return self.rnn.step_backward(dh)[:, s_dim:]


MODEL_KINDS = {
    cls.kind: cls
    for cls in (PosOnlyModel, TrackModel, AblatSalModel, AblatFuseModel,
                Cvpr18ImprovedModel, Mm18ImprovedModel)
}


def build_model(kind: str, **kwargs) -> Seq2SeqModel:
    if kind not in MODEL_KINDS:
        raise ValueError(
            f"unknown model kind {kind!r}; choose from {sorted(MODEL_KINDS)}")
    return MODEL_KINDS[kind](**kwargs)


def ablate(model_kind: str, **kwargs) -> Seq2SeqModel:
    """Build one of the two reduced variants by its short name."""
    mapping = {"ablat_sal": AblatSalModel, "ablat_fuse": AblatFuseModel}
    if model_kind not in mapping:
        raise ValueError(f"unknown ablation {model_kind!r}")
    return mapping[model_kind](**kwargs)


def zero_output_layer(model: Seq2SeqModel) -> Seq2SeqModel:
    """Zero the final layer so every displacement is exactly zero."""
    model.out.W[...] = 0
    model.out.b[...] = 0
    return model


def dataset_fingerprint(dataset: Dataset) -> str:
    """Stable content hash used to tie checkpoints to their training data."""
    digest = hashlib.sha256()
    for tr in sorted(dataset.traces, key=lambda t: (t.video_id, t.user_id)):
        digest.update(tr.video_id.encode())
        digest.update(tr.user_id.encode())
        digest.update(np.float64(tr.dt).tobytes())
        digest.update(np.ascontiguousarray(tr.samples, dtype=np.float64)
                      .tobytes())
    return digest.hexdigest()[:16]


def window_saliency_slice(window, saliency, spec: WindowSpec) -> np.ndarray:
    """Saliency frames t-M+1..t+H for a window, from a per-video map dict."""
    seq = saliency[window.video_id]
    lo = window.t_index - spec.m_history + 1
    hi = window.t_index + spec.horizon + 1
    if lo < 0 or hi > len(seq.maps):
        raise ValueError(
            f"saliency for video {window.video_id!r} does not cover "
            f"frames {lo}..{hi - 1}")
    return seq.maps[lo:hi]


def train_model(model: Seq2SeqModel, dataset: Dataset, cfg: TrainConfig,
                saliency: Optional[Dict[str, object]] = None) -> List[float]:
    """Minimize the xyz mean-squared error over the dataset's windows.

    saliency maps video ids to per-frame map sequences; required for
    content-aware models, ignored by position-only ones.  Returns the
    per-epoch mean training loss.  Fully deterministic under cfg.seed.
    """
    subset = "train" if any(v == "train" for v in dataset.split.values()) \
        else "all"
    wins = windows(dataset, cfg.window, subset=subset)
    if not wins:
        raise ValueError("no training windows available")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    if cfg.max_windows is not None and len(wins) > cfg.max_windows:
        keep = rng.choice(len(wins), size=cfg.max_windows, replace=False)
        wins = [wins[i] for i in sorted(keep)]
    if model.uses_saliency:
        if saliency is None:
            raise ValueError(f"{model.kind} training requires saliency")
        missing = sorted({w.video_id for w in wins} - set(saliency))
        if missing:
            raise ValueError(f"saliency missing for videos {missing}")
    hist = np.stack([w.history for w in wins]).astype(np.float32)
    fut = np.stack([w.future for w in wins]).astype(np.float32)
    opt = nn.Adam(lr=cfg.lr)
    losses: List[float] = []
    n = len(wins)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            sal_b = None
            if model.uses_saliency:
                sal_b = np.stack([
                    window_saliency_slice(wins[i], saliency, cfg.window)
                    for i in idx])
            outs = model.forward(
                hist[idx], sal_b, cfg.window.horizon,
                teacher=fut[idx] if cfg.scheduled_sampling > 0 else None,
                sample_p=cfg.scheduled_sampling, rng=rng)
            loss, d_outs = nn.mse_xyz_loss(outs, fut[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch} batch {bi}")
            model.zero_grads()
            model.backward(d_outs)
            opt.step(model.parameters())
            total += loss * len(idx)
        losses.append(total / n)
    model.trained = True
    return losses


def save_model(path, model: Seq2SeqModel, train_config: Optional[dict] = None,
               fingerprint: str = "") -> None:
    params = {name: value for name, value, _ in model.parameters()}
    config = {
        "model": {
            "units": model.units,
            "grid": list(model.grid),
            "encoder_saliency": model.encoder_saliency,
        },
        "train": train_config or {},
    }
    nn.save_checkpoint(path, model.kind, params, config, fingerprint)


def load_model(path) -> Seq2SeqModel:
    ck = nn.load_checkpoint(path)
    model_cfg = ck.train_config["model"]
    model = build_model(ck.model_kind, units=model_cfg["units"],
                        grid=tuple(model_cfg["grid"]),
                        encoder_saliency=model_cfg["encoder_saliency"])
    nn.restore_into(model.parameters(), ck.params)
    model.trained = True
    return model
