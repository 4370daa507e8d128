"""Numeric features: per-player vectors, frame matrices, windows, DCT.

Channel layout of a player vector (46 values)::

    [0:4]   bbox      x, y, h, w
    [4:38]  pose      17 keypoints, (x, y) interleaved
    [38:41] headpose  pitch, yaw, roll
    [41:43] gaze      pitch, yaw
    [43:45] velocity  vx, vy
    [45]    role      0/1 (shot-executing or not)
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .annotation import SHOT_ROLES, ClipAnnotation, FrameAnnotation, PlayerFrameAnnotation, Role
from .errors import EmptyInput, MissingVelocity, RangeError, ShapeError

N_CHANNELS = 46

SLICES = {
    "bbox": slice(0, 4),
    "pose": slice(4, 38),
    "headpose": slice(38, 41),
    "gaze": slice(41, 43),
    "velocity": slice(43, 45),
    "role": slice(45, 46),
}
FEATURE_ORDER = tuple(SLICES)
ROLE_CHANNEL = 45

NORM_EPS = 1e-8


def binarize_role(r: Role) -> int:
    return 1 if Role(r) in SHOT_ROLES else 0


def player_vector(a: PlayerFrameAnnotation) -> np.ndarray:
    if a.velocity is None:
        raise MissingVelocity(f"player {a.player_id} has no velocity; run derive_velocities first")
    b, g, h, v = a.bbox, a.gaze, a.headpose, a.velocity
    return np.array(
        [b.x, b.y, b.h, b.w, *a.pose, h.pitch, h.yaw, h.roll, g.pitch, g.yaw, v.vx, v.vy, binarize_role(a.role)],
        dtype=np.float64,
    )


def frame_matrix(f: FrameAnnotation) -> np.ndarray:
    """10 x 46 matrix, rows ordered by player_id."""
    return np.stack([player_vector(p) for p in sorted(f.players, key=lambda p: p.player_id)])


def clip_tensor(c: ClipAnnotation) -> np.ndarray:
    """All T frames as a T x 10 x 46 array."""
    return np.stack([frame_matrix(f) for f in c.frames])


def window_tensor(c: ClipAnnotation, tau: int) -> np.ndarray:
    """The first ``tau`` frames as a tau x 10 x 46 array."""
    if not 1 <= tau <= c.T:
        raise RangeError(f"tau={tau} outside [1, {c.T}]")
    return np.stack([frame_matrix(f) for f in c.frames[:tau]])


@dataclass(frozen=True)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls) -> "Normalizer":
        return cls(np.zeros(N_CHANNELS), np.ones(N_CHANNELS))

    def apply(self, w: np.ndarray) -> np.ndarray:
        return apply_normalizer(self, w)

    def invert(self, w: np.ndarray) -> np.ndarray:
        return invert_normalizer(self, w)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def fit_normalizer(train_windows: Iterable[np.ndarray]) -> Normalizer:
    """Per-channel mean/std over every (frame, player) slot of the windows."""
    rows = [np.asarray(w, dtype=np.float64).reshape(-1, N_CHANNELS) for w in train_windows]
    if not rows:
        raise EmptyInput("fit_normalizer needs at least one window")
    data = np.concatenate(rows)
    mean = data.mean(axis=0)
    std = np.maximum(data.std(axis=0), NORM_EPS)
    mean[ROLE_CHANNEL] = 0.0
    std[ROLE_CHANNEL] = 1.0
    return Normalizer(mean, std)


def _check_channels(nz: Normalizer, w: np.ndarray):
    if w.shape[-1] != nz.mean.shape[0]:
        raise ShapeError(f"expected {nz.mean.shape[0]} channels, got {w.shape[-1]}")


def apply_normalizer(nz: Normalizer, w: np.ndarray) -> np.ndarray:
    _check_channels(nz, w)
    return (w - nz.mean) / nz.std


def invert_normalizer(nz: Normalizer, w: np.ndarray) -> np.ndarray:
    _check_channels(nz, w)
    return w * nz.std + nz.mean


@functools.lru_cache(maxsize=None)
def dct_matrix(length: int) -> np.ndarray:
    """Orthonormal DCT-II matrix ``D`` with ``coeffs = D @ series``."""
    k = np.arange(length)[:, None]
    t = np.arange(length)[None, :]
    d = np.sqrt(2.0 / length) * np.cos(np.pi * (2 * t + 1) * k / (2 * length))
    d[0] /= np.sqrt(2.0)
    d.setflags(write=False)
    return d


def dct_time(w: np.ndarray, axis: int = 0) -> np.ndarray:
    """Orthonormal DCT-II along the time axis of every (player, channel) series."""
    w = np.asarray(w, dtype=np.float64)
    return np.moveaxis(np.tensordot(dct_matrix(w.shape[axis]), w, axes=(1, axis)), 0, axis)


def idct_time(coeffs: np.ndarray, axis: int = 0) -> np.ndarray:
    """Inverse of :func:`dct_time` (the transpose, since the basis is orthonormal)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    return np.moveaxis(np.tensordot(dct_matrix(coeffs.shape[axis]).T, coeffs, axes=(1, axis)), 0, axis)
