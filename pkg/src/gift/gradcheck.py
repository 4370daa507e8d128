"""Finite-difference checks of every differentiable composite used in training.

All checks run in float64. Random draws are repeated with a new seed until
no ReLU pre-activation lies within ``KINK_MARGIN`` of zero, so the central
differences never straddle a kink.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter
from .model import TrainConfig, loss_graph, model_init
from .stgcn import (
    KERNEL_WIDTH,
    StgcnBlockParams,
    gcn_layer,
    gradient_check,
    normalized_adjacency,
    stgcn_block,
    temporal_conv,
)

STEP = 1e-5
KINK_MARGIN = 10 * STEP
MAX_DRAWS = 50


def _clear_of_kinks(f) -> bool:
    with ad.kink_monitor() as floor:
        f()
    return floor[0] > KINK_MARGIN


def check_gcn(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(10, 46))
    target = rng.normal(size=(10, 46))
    w = Parameter(rng.normal(size=(46, 46)) / 7.0, "w")
    b = Parameter(rng.normal(size=46), "b")
    g = normalized_adjacency(10)
    return gradient_check(lambda: ad.mse(gcn_layer(x, g, w, b), target), [w, b], STEP)


def check_temporal_conv(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    x = Parameter(rng.normal(size=(2, 6, 10, 8)), "x")
    k = Parameter(rng.normal(size=(KERNEL_WIDTH, 8, 5)) / 5.0, "k")
    b = Parameter(rng.normal(size=5), "b")
    target = rng.normal(size=(2, 6, 10, 5))
    return gradient_check(lambda: ad.mse(temporal_conv(x, k, b), target), [x, k, b], STEP)


def check_block(residual: str, seed: int = 0) -> float:
    g = normalized_adjacency(10)
    for draw in range(MAX_DRAWS):
        rng = np.random.default_rng([seed, draw])
        x = Parameter(rng.normal(size=(5, 10, 6)), "x")
        params = StgcnBlockParams.init(rng, "blk", 6, 6, np.float64, residual)
        params.gcn_bias.data[:] = rng.normal(size=6) * 0.1
        target = rng.normal(size=(5, 10, 6))
        f = lambda: ad.mse(stgcn_block(x, params, g, residual=residual), target)
        if _clear_of_kinks(f):
            return gradient_check(f, [x, *params.parameters()], STEP)
    raise RuntimeError("could not draw a kink-free block input")


def check_full_model(residual: str = "input", seed: int = 0, embed_dim: int = 16, tau: int = 5,
                     T: int = 12, n_clips: int = 2, max_entries: int | None = None) -> float:
    """Full loss (reconstruction, forecast and consistency terms) at desk size."""
    cfg = TrainConfig(embed_dim=embed_dim, tau=tau, precision="float64", dropout=0.0, residual=residual)
    for draw in range(MAX_DRAWS):
        m = model_init(cfg, seed=seed * 1000 + draw)
        target = np.random.default_rng([seed, draw]).normal(size=(n_clips, T, 10, 46))

        def f():
            pred, latent, hidden = m.forward(target[:, :tau], T)
            return loss_graph(pred, target, tau, cfg, latent, hidden)[0]

        if _clear_of_kinks(f):
            return gradient_check(f, m.parameters(), STEP, max_entries=max_entries)
    raise RuntimeError("could not draw a kink-free model")


def run_suite(seed: int = 0, full_entries: int | None = 64) -> dict:
    """Every check, keyed by name. ``full_entries`` subsamples the full-model check per parameter."""
    return {
        "gcn_layer": check_gcn(seed),
        "temporal_conv": check_temporal_conv(seed),
        "block[input]": check_block("input", seed),
        "block[temporal]": check_block("temporal", seed),
        "full_model[input]": check_full_model("input", seed, max_entries=full_entries),
        "full_model[temporal]": check_full_model("temporal", seed, max_entries=full_entries),
    }
