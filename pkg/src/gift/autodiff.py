"""Minimal reverse-mode automatic differentiation over numpy arrays.

Only the operations needed by the spatio-temporal graph network are
provided. Tensors carry up to four axes laid out as
``(batch, time, player, channel)``; operations that act along time or
players take the axis explicitly.

Every op builds a new :class:`Tensor` holding its parents and a closure
that pushes the upstream gradient back to them. :meth:`Tensor.backward`
walks the graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

from .errors import NonFinite, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Backpropagate from this tensor (a scalar unless ``grad`` is given)."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _topological(self)
        self._accumulate(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)


class Parameter(Tensor):
    """Learnable leaf tensor with a stable name used by checkpoints."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _topological(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_kink_floor = None


@contextlib.contextmanager
def kink_monitor():
    """Record the smallest |pre-activation| seen by :func:`relu` in the block.

    Yields a one-element list whose entry is updated in place.
    """
    global _kink_floor
    previous = _kink_floor
    _kink_floor = [np.inf]
    try:
        yield _kink_floor
    finally:
        _kink_floor = previous


def _result(data, parents, backward) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFinite("non-finite value produced in forward pass")
    parents = tuple(p for p in parents if isinstance(p, Tensor))
    if not any(p.requires_grad for p in parents):
        return Tensor(data)
    return Tensor(data, _parents=parents, _backward=backward)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _push(t, g):
    if isinstance(t, Tensor) and t.requires_grad:
        t._accumulate(_unbroadcast(g, t.shape))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _push(a, g)
        _push(b, g)

    return _result(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _push(a, g)
        _push(b, -g)

    return _result(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _push(a, g * b.data)
        _push(b, g * a.data)

    return _result(a.data * b.data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight (+ bias)`` over the last axis."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input has {x.shape[-1]} channels, weight expects {weight.shape[0]}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data.T)
        if weight.requires_grad:
            weight._accumulate(x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1]))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))

    return _result(out, (x, weight, bias), backward)


def mix(x: Tensor, matrix: np.ndarray, axis: int) -> Tensor:
    """Apply a constant matrix along ``axis``: ``out[.., i, ..] = sum_j M[i, j] x[.., j, ..]``.

    Used for graph propagation (player axis) and DCT/IDCT (time axis).
    """
    x = as_tensor(x)
    axis = axis % x.data.ndim
    if matrix.shape[1] != x.shape[axis]:
        raise ShapeError(f"mix: matrix {matrix.shape} does not fit axis {axis} of {x.shape}")
    m = matrix.astype(x.dtype, copy=False)
    out = np.moveaxis(np.tensordot(m, x.data, axes=(1, axis)), 0, axis)

    def backward(g):
        x._accumulate(np.moveaxis(np.tensordot(m.T, g, axes=(1, axis)), 0, axis))

    return _result(out, (x,), backward)


def time_conv(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Convolution along the time axis (-3) with zero "same" padding.

    ``kernel`` has shape ``(width, c_in, c_out)`` with odd width; tap ``j``
    multiplies frame ``t + j - width // 2``. The player axis is untouched,
    so this is a ``(width, 1)`` 2-D convolution with full channel mixing.
    """
    x = as_tensor(x)
    width, c_in, c_out = kernel.shape
    if x.shape[-1] != c_in:
        raise ShapeError(f"time_conv: input has {x.shape[-1]} channels, kernel expects {c_in}")
    if width % 2 != 1:
        raise ShapeError("time_conv: kernel width must be odd")
    half = width // 2
    length = x.shape[-3]
    pad = [(0, 0)] * x.data.ndim
    pad[-3] = (half, half)
    xp = np.pad(x.data, pad)
    # taps stacked along channels so the whole conv is one GEMM
    cols = np.concatenate([xp[..., j:j + length, :, :] for j in range(width)], axis=-1)
    k2 = kernel.data.reshape(width * c_in, c_out)
    out = cols @ k2
    if bias is not None:
        out = out + bias.data

    def backward(g):
        g2 = g.reshape(-1, c_out)
        if kernel.requires_grad:
            kernel._accumulate((cols.reshape(-1, width * c_in).T @ g2).reshape(kernel.shape))
        if x.requires_grad:
            gcols = g @ k2.T
            gxp = np.zeros_like(xp)
            for j in range(width):
                gxp[..., j:j + length, :, :] += gcols[..., j * c_in:(j + 1) * c_in]
            x._accumulate(gxp[..., half:half + length, :, :])
        if bias is not None and bias.requires_grad:
            bias._accumulate(g2.sum(axis=0))

    return _result(out, (x, kernel, bias), backward)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if _kink_floor is not None and x.data.size:
        _kink_floor[0] = min(_kink_floor[0], float(np.min(np.abs(x.data))))
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return _result(x.data * mask, (x,), backward)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; callers skip it entirely in eval mode."""
    if rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return mul(x, keep)


def take(x: Tensor, indices: Sequence[int], axis: int) -> Tensor:
    """Gather entries along ``axis``; repeated indices accumulate gradient."""
    x = as_tensor(x)
    axis = axis % x.data.ndim
    idx = np.asarray(indices, dtype=np.intp)
    out = np.take(x.data, idx, axis=axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(np.moveaxis(gx, axis, 0), idx, np.moveaxis(g, axis, 0))
        x._accumulate(gx)

    return _result(out, (x,), backward)


def index(x: Tensor, key) -> Tensor:
    """Basic (slice) indexing, ``x[key]``."""
    x = as_tensor(x)
    out = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[key] += g
        x._accumulate(gx)

    return _result(np.array(out), (x,), backward)


def mse(a, b) -> Tensor:
    """Mean of squared differences over every element."""
    a, b = as_tensor(a), as_tensor(b)
    diff = a.data - b.data
    n = diff.size

    def backward(g):
        d = (2.0 / n) * g * diff
        _push(a, d)
        _push(b, -d)

    return _result(np.asarray(np.mean(diff * diff)), (a, b), backward)


def weighted_sum(terms: Iterable[tuple[float, Tensor]]) -> Tensor:
    """``sum_k w_k * t_k`` for scalar tensors."""
    terms = [(float(w), as_tensor(t)) for w, t in terms]
    value = sum(w * t.data for w, t in terms)

    def backward(g):
        for w, t in terms:
            _push(t, w * g)

    return _result(np.asarray(value), tuple(t for _, t in terms), backward)

