"""The tensor path from annotations to the spatio-temporal graph network.

Shows the 46-number player vector, the temporal DCT, the normalized team
graph and one network block, then checks gradients by finite differences.
"""
import numpy as np

from gift import autodiff as ad
from gift.features import SLICES, clip_tensor, dct_time, idct_time, window_tensor
from gift.gradcheck import check_block, check_full_model
from gift.stgcn import StgcnBlockParams, normalized_adjacency, stgcn_block
from gift.synth import SynthConfig, generate_clip

np.set_printoptions(precision=3, suppress=True)
clip = generate_clip(SynthConfig(seed=7), 3)

x = clip_tensor(clip)
print("clip tensor (frames, players, features):", x.shape)
for name, sl in SLICES.items():
    print(f"  {name:<9s} columns {sl.start:>2d}:{sl.stop:<2d}  player 1, frame 1 -> {x[0, 0, sl][:4]}")

w = window_tensor(clip, 10)
c = dct_time(w)
print("\nseen window", w.shape, "-> DCT coefficients", c.shape)
energy = (c ** 2).sum(axis=(1, 2))
print("share of energy per coefficient:", energy / energy.sum())
print("inverse transform error:", np.abs(idct_time(c) - w).max())

g = normalized_adjacency(10)
print("\nnormalized adjacency of the 10-player complete graph: every entry", g[0, 0])

# With the complete graph the spatial step hands every player the same mean.
# The block's residual decides whether anything player-specific survives.
rng = np.random.default_rng(0)
h = rng.normal(size=(10, 10, 8))
for residual in ("temporal", "input"):
    p = StgcnBlockParams.init(rng, "demo", 8, 8, residual=residual)
    out = stgcn_block(h, p, g, residual=residual).data
    print(f"residual={residual:<8s} spread across players: {np.ptp(out, axis=1).max():.3g}")

print("\nfinite-difference checks (max relative error):")
print("  one block           ", f"{check_block('input'):.2e}")
print("  full loss, embed 16 ", f"{check_full_model('input', max_entries=8):.2e}")

# Autodiff by hand on a tiny graph: d/dx mean((2x)^2) = 8x / n
xp = ad.Parameter(np.array([1.0, -2.0, 0.5]), "x")
ad.mse(ad.mul(xp, 2.0), np.zeros(3)).backward()
print("\ngradient of mean((2x)^2):", xp.grad, "expected", 8 * xp.data / 3)
