"""Spatio-temporal graph convolution blocks over the 10-player graph.

Activations are laid out ``(batch, time, player, channel)``; the batch axis
is optional everywhere. A block is::

    spatial  = A_hat @ X @ W_gcn + b_gcn          (per time step)
    temporal = conv_(3,1)(spatial) + b_conv        (same padding along time)
    out      = relu(temporal + Res(.))             (dropout after, training only)

where ``Res`` is a bias-free 1x1 projection of either ``temporal`` itself
(``residual="temporal"``) or of the block input (``residual="input"``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .errors import NonFinite, RangeError, ShapeError
from .features import dct_matrix

N_BLOCKS = 4
KERNEL_WIDTH = 3
RESIDUAL_MODES = ("input", "temporal")


def normalized_adjacency(n: int, adjacency: np.ndarray | None = None) -> np.ndarray:
    """Symmetrically normalized ``D^-1/2 (A + I) D^-1/2``.

    ``adjacency`` defaults to the complete graph on ``n`` nodes.
    """
    if n < 1:
        raise ValueError("graph needs at least one node")
    if adjacency is None:
        adjacency = np.ones((n, n)) - np.eye(n)
    a = np.asarray(adjacency, dtype=np.float64)
    if a.shape != (n, n) or not np.array_equal(a, a.T):
        raise ShapeError("adjacency must be a symmetric n x n matrix")
    a = a + np.eye(n)
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return d[:, None] * a * d[None, :]


def team_adjacency() -> np.ndarray:
    """Binary adjacency joining players within the same team only."""
    a = np.zeros((10, 10))
    a[:5, :5] = 1.0
    a[5:, 5:] = 1.0
    np.fill_diagonal(a, 0.0)
    return a


def glorot(rng: np.random.Generator, shape: tuple, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


@dataclass
class StgcnBlockParams:
    gcn_weight: Parameter
    gcn_bias: Parameter
    conv_kernel: Parameter
    conv_bias: Parameter
    res_weight: Parameter

    @classmethod
    def init(cls, rng, prefix: str, c_in: int, c_out: int, dtype=np.float64,
             residual: str = "input") -> "StgcnBlockParams":
        res_in = c_in if residual == "input" else c_out
        w = KERNEL_WIDTH
        return cls(
            gcn_weight=Parameter(glorot(rng, (c_in, c_out), c_in, c_out, dtype), f"{prefix}.gcn.weight"),
            gcn_bias=Parameter(np.zeros(c_out, dtype), f"{prefix}.gcn.bias"),
            conv_kernel=Parameter(glorot(rng, (w, c_out, c_out), w * c_out, w * c_out, dtype),
                                  f"{prefix}.conv.kernel"),
            conv_bias=Parameter(np.zeros(c_out, dtype), f"{prefix}.conv.bias"),
            res_weight=Parameter(glorot(rng, (res_in, c_out), res_in, c_out, dtype), f"{prefix}.res.weight"),
        )

    def parameters(self) -> list:
        return [self.gcn_weight, self.gcn_bias, self.conv_kernel, self.conv_bias, self.res_weight]


def gcn_layer(x, graph: np.ndarray, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``A_hat @ X @ W (+ b)`` applied independently at every time step."""
    x = ad.as_tensor(x)
    if x.shape[-2] != graph.shape[0]:
        raise ShapeError(f"gcn_layer: {x.shape[-2]} players but graph has {graph.shape[0]} nodes")
    return ad.linear(ad.mix(x, graph, axis=-2), weight, bias)


def temporal_conv(x, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    x = ad.as_tensor(x)
    if x.data.ndim < 3:
        raise ShapeError("temporal_conv expects (..., time, player, channel)")
    return ad.time_conv(x, kernel, bias)


def stgcn_block(x, params: StgcnBlockParams, graph: np.ndarray, residual: str = "input",
                dropout: float = 0.0, rng: np.random.Generator | None = None,
                training: bool = False) -> Tensor:
    if residual not in RESIDUAL_MODES:
        raise ValueError(f"residual must be one of {RESIDUAL_MODES}")
    x = ad.as_tensor(x)
    spatial = gcn_layer(x, graph, params.gcn_weight, params.gcn_bias)
    temporal = temporal_conv(spatial, params.conv_kernel, params.conv_bias)
    source = x if residual == "input" else temporal
    out = ad.relu(ad.add(temporal, ad.linear(source, params.res_weight)))
    if training and dropout > 0.0:
        out = ad.dropout(out, dropout, rng)
    return out


def encoder_forward(x, blocks: Sequence[StgcnBlockParams], graph: np.ndarray, **block_kw) -> Tensor:
    """Run the stacked encoder blocks over an embedded window."""
    if len(blocks) != N_BLOCKS:
        raise ShapeError(f"encoder needs exactly {N_BLOCKS} blocks, got {len(blocks)}")
    h = ad.as_tensor(x)
    for b in blocks:
        h = stgcn_block(h, b, graph, **block_kw)
    return h


def replicate_last(latent, length: int) -> Tensor:
    """Extend the time axis (-3) to ``length`` by repeating the last frame."""
    latent = ad.as_tensor(latent)
    tau = latent.shape[-3]
    if length < tau:
        raise RangeError(f"query length {length} shorter than seen window {tau}")
    idx = list(range(tau)) + [tau - 1] * (length - tau)
    return ad.take(latent, idx, axis=-3)


def decoder_forward(latent, length: int, blocks: Sequence[StgcnBlockParams], graph: np.ndarray,
                    out_weight: Tensor, out_bias: Tensor | None = None, **block_kw):
    """Decode a tau-frame latent into ``length`` frames of 46 features.

    Returns ``(features, hidden)``: ``features`` is time-domain output after
    the inverse DCT, ``hidden`` the last decoder block's activations (used
    by the consistency loss).
    """
    if len(blocks) != N_BLOCKS:
        raise ShapeError(f"decoder needs exactly {N_BLOCKS} blocks, got {len(blocks)}")
    h = replicate_last(latent, length)
    for b in blocks:
        h = stgcn_block(h, b, graph, **block_kw)
    coeffs = ad.linear(h, out_weight, out_bias)
    return ad.mix(coeffs, dct_matrix(length).T, axis=-3), h


def gradient_check(f: Callable[[], Tensor], params: Sequence[Parameter], h: float = 1e-5,
                   max_entries: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` must rebuild the scalar loss from the current parameter values on
    every call. The error per entry is ``|g_ad - g_fd| / max(1, |g_fd|)``.
    With ``max_entries`` only that many randomly chosen entries per parameter
    are differenced.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise TypeError(f"gradient_check needs float64 parameters, {p.name} is {p.data.dtype}")
        p.grad = None
    loss = f()
    if not np.isfinite(loss.data).all():
        raise NonFinite("loss is not finite")
    loss.backward()
    worst = 0.0
    rng = rng or np.random.default_rng(0)
    for p in params:
        g_ad = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        entries = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for i in entries:
            orig = flat[i]
            flat[i] = orig + h
            fp = float(f().data)
            flat[i] = orig - h
            fm = float(f().data)
            flat[i] = orig
            g_fd = (fp - fm) / (2.0 * h)
            worst = max(worst, abs(g_ad.reshape(-1)[i] - g_fd) / max(1.0, abs(g_fd)))
    return worst
