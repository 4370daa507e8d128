"""The shot-timing forecaster: embedding, STGCN encoder/decoder, losses and training.

Data flow for one clip with seen window ``tau`` and length ``T``::

    window (tau,10,46) -> normalize -> DCT over time -> lift 46->E
        -> 4 encoder blocks -> latent (tau,10,E)
        -> repeat last latent frame to T -> 4 decoder blocks -> project E->46
        -> inverse DCT over time -> prediction (T,10,46) -> denormalize

Frames ``1..tau`` of the prediction are a reconstruction, ``tau+1..T`` the
forecast. Losses are computed in normalized feature space.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .annotation import ClipAnnotation
from .autodiff import Parameter, Tensor
from .errors import ConfigError, EmptyInput, NonFinite, RangeError, ShapeError
from .features import FEATURE_ORDER, N_CHANNELS, ROLE_CHANNEL, SLICES, Normalizer, clip_tensor, dct_time, fit_normalizer
from .stgcn import (
    N_BLOCKS,
    RESIDUAL_MODES,
    StgcnBlockParams,
    decoder_forward,
    encoder_forward,
    glorot,
    normalized_adjacency,
)

CHECKPOINT_FORMAT = "gift-checkpoint"
CHECKPOINT_VERSION = 1
OFFENSE_ROWS = slice(0, 5)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    epochs: int = 100
    dropout: float = 0.1
    tau: int = 10
    lambda_recon: float = 2.0
    lambda_fore: float = 0.01
    lambda_const: float = 10.0
    # bbox, pose, headpose, gaze, velocity, role
    feature_weights: tuple = (0.1, 0.05, 0.001, 0.1, 10.0, 0.1)
    embed_dim: int = 128
    batch_size: int = 8
    seed: int = 0
    residual: str = "input"
    use_const: bool = True
    dct_keep: Optional[int] = None
    threshold: float = 0.5
    precision: str = "float32"

    def __post_init__(self):
        lambdas = (self.lambda_recon, self.lambda_fore, self.lambda_const, *self.feature_weights)
        if any(l < 0 for l in lambdas):
            raise ConfigError("loss weights must be non-negative")
        if len(self.feature_weights) != len(FEATURE_ORDER):
            raise ConfigError(f"need {len(FEATURE_ORDER)} feature weights")
        if self.tau < 1:
            raise ConfigError("tau must be at least 1")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.embed_dim < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("embed_dim and batch_size must be positive, epochs non-negative")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.residual not in RESIDUAL_MODES:
            raise ConfigError(f"residual must be one of {RESIDUAL_MODES}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError("precision must be float32 or float64")
        if self.dct_keep is not None and self.dct_keep < 1:
            raise ConfigError("dct_keep must be positive")

    @property
    def dtype(self):
        return np.dtype(self.precision)

    @property
    def weights(self) -> dict:
        return dict(zip(FEATURE_ORDER, self.feature_weights))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["feature_weights"] = list(self.feature_weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys {sorted(unknown)}")
        d = dict(d)
        if "feature_weights" in d:
            d["feature_weights"] = tuple(d["feature_weights"])
        return cls(**d)


# ---------------------------------------------------------------- model


class GiftModel:
    def __init__(self, config: TrainConfig, params: dict, normalizer: Normalizer | None = None,
                 graph: np.ndarray | None = None):
        self.config = config
        self.params = params
        self.normalizer = normalizer or Normalizer.identity()
        self.graph = normalized_adjacency(10) if graph is None else graph
        self.encoder = [self._block(f"encoder.{i}") for i in range(N_BLOCKS)]
        self.decoder = [self._block(f"decoder.{i}") for i in range(N_BLOCKS)]

    def _block(self, prefix: str) -> StgcnBlockParams:
        p = self.params
        return StgcnBlockParams(
            p[f"{prefix}.gcn.weight"], p[f"{prefix}.gcn.bias"],
            p[f"{prefix}.conv.kernel"], p[f"{prefix}.conv.bias"], p[f"{prefix}.res.weight"],
        )

    def parameters(self) -> list:
        return list(self.params.values())

    def state(self) -> dict:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, state: dict):
        for name, value in state.items():
            self.params[name].data[...] = value

    def embed(self, windows: np.ndarray) -> np.ndarray:
        """DCT of normalized windows along time, optionally truncated to ``dct_keep`` terms."""
        coeffs = dct_time(windows, axis=-3)
        keep = self.config.dct_keep
        if keep is not None and keep < coeffs.shape[-3]:
            coeffs[..., keep:, :, :] = 0.0
        return coeffs.astype(self.config.dtype)

    def forward(self, windows: np.ndarray, length: int, training: bool = False,
                rng: np.random.Generator | None = None):
        """Normalized ``(..., tau, 10, 46)`` windows to normalized ``(..., length, 10, 46)`` output.

        Returns ``(prediction, encoder_latent, decoder_hidden)`` tensors.
        """
        if windows.shape[-2:] != (10, N_CHANNELS):
            raise ShapeError(f"expected (..., tau, 10, {N_CHANNELS}) windows, got {windows.shape}")
        cfg = self.config
        kw = dict(residual=cfg.residual, dropout=cfg.dropout, rng=rng, training=training)
        x = ad.linear(ad.Tensor(self.embed(windows)), self.params["lift.weight"], self.params["lift.bias"])
        latent = encoder_forward(x, self.encoder, self.graph, **kw)
        pred, hidden = decoder_forward(latent, length, self.decoder, self.graph,
                                       self.params["out.weight"], self.params["out.bias"], **kw)
        return pred, latent, hidden

    def predictor(self, tau: int | None = None, threshold: float | None = None):
        tau = self.config.tau if tau is None else tau
        threshold = self.config.threshold if threshold is None else threshold
        return lambda clip: forecast_occurrence(self, clip, tau, threshold)


def model_init(cfg: TrainConfig, seed: int | None = None, normalizer: Normalizer | None = None,
               graph: np.ndarray | None = None) -> GiftModel:
    """Fresh model with Glorot-uniform weights and zero biases, seeded deterministically."""
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, 1])
    e, dt = cfg.embed_dim, cfg.dtype
    params = {
        "lift.weight": Parameter(glorot(rng, (N_CHANNELS, e), N_CHANNELS, e, dt), "lift.weight"),
        "lift.bias": Parameter(np.zeros(e, dt), "lift.bias"),
    }
    for part in ("encoder", "decoder"):
        for i in range(N_BLOCKS):
            block = StgcnBlockParams.init(rng, f"{part}.{i}", e, e, dt, cfg.residual)
            params.update({p.name: p for p in block.parameters()})
    params["out.weight"] = Parameter(glorot(rng, (e, N_CHANNELS), e, N_CHANNELS, dt), "out.weight")
    params["out.bias"] = Parameter(np.zeros(N_CHANNELS, dt), "out.bias")
    return GiftModel(cfg, params, normalizer, graph)


def forward_full(m: GiftModel, c: ClipAnnotation, tau: int | None = None) -> np.ndarray:
    """Predicted T x 10 x 46 features for every frame of ``c``, in original units."""
    tau = m.config.tau if tau is None else tau
    if not 1 <= tau < c.T:
        raise RangeError(f"tau={tau} must satisfy 1 <= tau < T={c.T}")
    full = m.normalizer.apply(clip_tensor(c))
    pred, _, _ = m.forward(full[:tau], c.T)
    return m.normalizer.invert(pred.data.astype(np.float64))


# ---------------------------------------------------------------- loss


@dataclass
class LossBreakdown:
    total: float
    recon: float
    fore: float
    const: float
    recon_terms: dict = field(default_factory=dict)
    fore_terms: dict = field(default_factory=dict)

    def recombined(self, cfg: TrainConfig) -> float:
        return cfg.lambda_recon * self.recon + cfg.lambda_fore * self.fore + cfg.lambda_const * self.const

    def flat(self) -> dict:
        out = {"total": self.total, "recon": self.recon, "fore": self.fore, "const": self.const}
        for name in FEATURE_ORDER:
            out[f"recon_{name}"] = self.recon_terms.get(name, 0.0)
        for name in FEATURE_ORDER:
            out[f"fore_{name}"] = self.fore_terms.get(name, 0.0)
        return out

    @staticmethod
    def weighted_mean(items: Sequence[tuple[float, "LossBreakdown"]]) -> "LossBreakdown":
        total_w = sum(w for w, _ in items)
        avg = lambda get: sum(w * get(b) for w, b in items) / total_w
        return LossBreakdown(
            total=avg(lambda b: b.total),
            recon=avg(lambda b: b.recon),
            fore=avg(lambda b: b.fore),
            const=avg(lambda b: b.const),
            recon_terms={n: avg(lambda b: b.recon_terms[n]) for n in FEATURE_ORDER},
            fore_terms={n: avg(lambda b: b.fore_terms[n]) for n in FEATURE_ORDER},
        )


def _span_terms(pred: Tensor, target: np.ndarray, frames: slice) -> dict:
    return {
        name: ad.mse(ad.index(pred, (Ellipsis, frames, slice(None), sl)), target[..., frames, :, sl])
        for name, sl in SLICES.items()
    }


def loss_graph(pred, target: np.ndarray, tau: int, cfg: TrainConfig,
               encoder_latent: Tensor | None = None, decoder_hidden: Tensor | None = None):
    """Differentiable total loss plus its :class:`LossBreakdown`.

    Each per-feature term is the mean squared error over frames, players
    and that feature's components; with equally sized players this equals
    the player average of the per-player losses.
    """
    pred = ad.as_tensor(pred)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    T = pred.shape[-3]
    if not 1 <= tau <= T:
        raise RangeError(f"tau={tau} outside [1, {T}]")
    w = cfg.weights
    recon_t = _span_terms(pred, target, slice(0, tau))
    recon = ad.weighted_sum((w[n], t) for n, t in recon_t.items())
    fore_t = _span_terms(pred, target, slice(tau, T)) if T > tau else {}
    fore = ad.weighted_sum((w[n], t) for n, t in fore_t.items()) if fore_t else ad.Tensor(0.0)
    if cfg.use_const and encoder_latent is not None and decoder_hidden is not None:
        const = ad.mse(ad.index(decoder_hidden, (Ellipsis, slice(0, tau), slice(None), slice(None))),
                       encoder_latent)
    else:
        const = ad.Tensor(0.0)
    total = ad.weighted_sum([(cfg.lambda_recon, recon), (cfg.lambda_fore, fore), (cfg.lambda_const, const)])
    if not np.isfinite(total.data):
        raise NonFinite("loss is not finite")
    # the breakdown is rebuilt in float64 from the sub-terms, so it is
    # exactly additive whatever precision the graph ran in
    recon_terms = {n: float(t.data) for n, t in recon_t.items()}
    fore_terms = {n: float(fore_t[n].data) if fore_t else 0.0 for n in FEATURE_ORDER}
    bd = LossBreakdown(
        total=0.0,
        recon=sum(w[n] * recon_terms[n] for n in FEATURE_ORDER),
        fore=sum(w[n] * fore_terms[n] for n in FEATURE_ORDER),
        const=float(const.data),
        recon_terms=recon_terms,
        fore_terms=fore_terms,
    )
    bd.total = bd.recombined(cfg)
    return total, bd


def compute_loss(pred, target: np.ndarray, tau: int, cfg: TrainConfig,
                 encoder_latent=None, decoder_hidden=None) -> LossBreakdown:
    return loss_graph(pred, target, tau, cfg, encoder_latent, decoder_hidden)[1]


def feature_mae(pred: np.ndarray, target: np.ndarray, frames: slice = slice(None)) -> dict:
    """Mean absolute error per feature group in original units (for reporting)."""
    return {n: float(np.mean(np.abs(pred[frames, :, sl] - target[frames, :, sl]))) for n, sl in SLICES.items()}


# ---------------------------------------------------------------- optimizer


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(self, params: Sequence[Parameter], lr: float, weight_decay: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.weight_decay, self.eps = lr, weight_decay, eps
        self.b1, self.b2 = betas
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * p.data
            p.data -= (self.lr * update).astype(p.data.dtype)


# ---------------------------------------------------------------- training


@dataclass
class _Prepared:
    clip_id: str
    T: int
    features: np.ndarray  # normalized T x 10 x 46


def _prepare(clips, normalizer: Normalizer, dtype) -> list:
    return [_Prepared(c.clip_id, c.T, normalizer.apply(clip_tensor(c)).astype(dtype)) for c in clips]


def _groups(items: list) -> list:
    """Partition by clip length so each group stacks into one batch tensor."""
    by_len: dict = {}
    for it in items:
        by_len.setdefault(it.T, []).append(it)
    return [by_len[k] for k in sorted(by_len)]


def _batch_loss(model: GiftModel, items: list, tau: int, training: bool, rng, backward: bool):
    parts = []
    n = len(items)
    for group in _groups(items):
        if group[0].T <= tau:
            raise RangeError(f"clip {group[0].clip_id} has T={group[0].T} <= tau={tau}")
        target = np.stack([g.features for g in group])
        pred, latent, hidden = model.forward(target[:, :tau], group[0].T, training=training, rng=rng)
        total, bd = loss_graph(pred, target, tau, model.config, latent, hidden)
        if backward:
            ad.weighted_sum([(len(group) / n, total)]).backward()
        parts.append((len(group), bd))
    return LossBreakdown.weighted_mean(parts)


def evaluate_loss(model: GiftModel, clips, tau: int | None = None) -> LossBreakdown:
    """Eval-mode mean loss over ``clips`` (normalized space)."""
    tau = model.config.tau if tau is None else tau
    items = _prepare(clips, model.normalizer, model.config.dtype)
    if not items:
        raise EmptyInput("no clips to score")
    return _batch_loss(model, items, tau, training=False, rng=None, backward=False)


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)  # dicts: epoch, train LossBreakdown, val LossBreakdown
    best_epoch: int = 0

    def to_csv(self) -> str:
        keys = list(LossBreakdown(0, 0, 0, 0).flat())
        header = ["epoch"] + [f"train_{k}" for k in keys] + [f"val_{k}" for k in keys]
        lines = [",".join(header)]
        for row in self.epochs:
            tr, va = row["train"].flat(), row["val"].flat()
            lines.append(",".join([str(row["epoch"])] + [repr(tr[k]) for k in keys] + [repr(va[k]) for k in keys]))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        doc = {
            "best_epoch": self.best_epoch,
            "epochs": [{"epoch": r["epoch"], "train": r["train"].flat(), "val": r["val"].flat()} for r in self.epochs],
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def train(train_clips, val_clips, cfg: TrainConfig, model: GiftModel | None = None,
          on_step: Callable[[int, LossBreakdown], None] | None = None,
          on_epoch: Callable[[dict], None] | None = None):
    """Fit a model; returns ``(model, history)`` with the best-validation weights loaded.

    The normalizer is fitted on the training clips unless a model is passed in.
    """
    train_clips, val_clips = list(train_clips), list(val_clips)
    if not train_clips or not val_clips:
        raise EmptyInput("train and validation splits must be non-empty")
    if model is None:
        normalizer = fit_normalizer(clip_tensor(c) for c in train_clips)
        model = model_init(cfg, normalizer=normalizer)
    tau = cfg.tau
    train_items = _prepare(train_clips, model.normalizer, cfg.dtype)
    val_items = _prepare(val_clips, model.normalizer, cfg.dtype)
    order_rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, 2])
    drop_rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, 3])
    opt = AdamW(model.parameters(), cfg.learning_rate, cfg.weight_decay)
    history = TrainHistory()
    best, best_state = np.inf, model.state()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = order_rng.permutation(len(train_items))
        parts = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_items[i] for i in order[start:start + cfg.batch_size]]
            opt.zero_grad()
            bd = _batch_loss(model, batch, tau, training=True, rng=drop_rng, backward=True)
            opt.step()
            step += 1
            if on_step is not None:
                on_step(step, bd)
            parts.append((len(batch), bd))
        row = {
            "epoch": epoch,
            "train": LossBreakdown.weighted_mean(parts),
            "val": _batch_loss(model, val_items, tau, training=False, rng=None, backward=False),
        }
        if not np.isfinite(row["train"].total):
            raise NonFinite(f"training diverged at epoch {epoch}")
        history.epochs.append(row)
        if row["val"].total < best:
            best, best_state, history.best_epoch = row["val"].total, model.state(), epoch
        if on_epoch is not None:
            on_epoch(row)
    model.load_state(best_state)
    return model, history


# ---------------------------------------------------------------- occurrence


@dataclass(frozen=True)
class OccurrencePrediction:
    point_estimate: int
    crossed_threshold: bool
    peak_score: float
    clip_id: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def occurrence_from_prediction(pred: np.ndarray, tau: int, threshold: float = 0.5,
                               clip_id: str = "") -> OccurrencePrediction:
    """Shot frame from a predicted T x 10 x 46 tensor (1-based frame numbers).

    The score of frame k is the largest predicted role value among the
    offensive players. The first forecast frame reaching ``threshold`` wins;
    if none does, the highest-scoring frame is returned.
    """
    T = pred.shape[0]
    if not 1 <= tau < T:
        raise RangeError(f"tau={tau} must satisfy 1 <= tau < T={T}")
    scores = pred[tau:, OFFENSE_ROWS, ROLE_CHANNEL].max(axis=1)
    hits = np.flatnonzero(scores >= threshold)
    crossed = hits.size > 0
    k = int(hits[0]) if crossed else int(np.argmax(scores))
    return OccurrencePrediction(tau + 1 + k, bool(crossed), float(scores.max()), clip_id)


def forecast_occurrence(m: GiftModel, c: ClipAnnotation, tau: int | None = None,
                        threshold: float | None = None) -> OccurrencePrediction:
    tau = m.config.tau if tau is None else tau
    threshold = m.config.threshold if threshold is None else threshold
    return occurrence_from_prediction(forward_full(m, c, tau), tau, threshold, c.clip_id)


# ---------------------------------------------------------------- checkpoints


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a)
    return {
        "shape": list(a.shape),
        "dtype": a.dtype.str,
        "data": base64.b64encode(a.tobytes()).decode("ascii"),
    }


def _decode_array(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


def checkpoint_bytes(m: GiftModel) -> bytes:
    """Serialized model: config, normalizer, graph and raw little-endian parameters."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": m.config.to_dict(),
        "normalizer": {"mean": _encode_array(m.normalizer.mean.astype("<f8")),
                       "std": _encode_array(m.normalizer.std.astype("<f8"))},
        "graph": _encode_array(m.graph.astype("<f8")),
        "params": {name: _encode_array(p.data.astype(p.data.dtype.newbyteorder("<"))) for name, p in m.params.items()},
    }
    return (json.dumps(doc, sort_keys=True) + "\n").encode()


def save_checkpoint(m: GiftModel, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(m))


def load_checkpoint(path) -> GiftModel:
    doc = json.loads(Path(path).read_bytes())
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: not a version-{CHECKPOINT_VERSION} gift checkpoint")
    cfg = TrainConfig.from_dict(doc["config"])
    normalizer = Normalizer(_decode_array(doc["normalizer"]["mean"]), _decode_array(doc["normalizer"]["std"]))
    params = {name: Parameter(_decode_array(d), name) for name, d in doc["params"].items()}
    return GiftModel(cfg, params, normalizer, _decode_array(doc["graph"]))
