"""Reverse-mode automatic differentiation on numpy arrays.

A `Tensor` wraps an ndarray and records the operations that produced it,
forming an expression tape. Calling :meth:`Tensor.backward` on a scalar
walks the tape in reverse topological order and accumulates gradients
into every tensor created with ``requires_grad=True``.

All arithmetic is 64-bit. Recording can be suspended with :func:`no_grad`
for cheap evaluation-only passes; the forward values are identical either
way, so replaying a graph reproduces its value bit-exactly.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np

_STATE = threading.local()  # recording is per-thread: graphs stay confined


def _grad_enabled() -> bool:
    return getattr(_STATE, "grad_enabled", True)


@contextmanager
def no_grad():
    """Suspend tape recording inside the context (current thread only)."""
    prior = _grad_enabled()
    _STATE.grad_enabled = False
    try:
        yield
    finally:
        _STATE.grad_enabled = prior


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """Node of the expression tape: a float64 array plus backward closure."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = _as_array(value)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
            if self.grad.shape != self.value.shape:
                self.grad = np.broadcast_to(self.grad, self.value.shape).copy()
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-accumulate d(self)/d(leaf) for every recorded leaf."""
        if self.value.ndim != 0:
            raise ValueError("backward() requires a scalar tensor")
        order = []
        seen = set()
        stack = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.value))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, grad={self.requires_grad})"


def parameter(value) -> Tensor:
    """A leaf tensor that collects gradients."""
    return Tensor(value, requires_grad=True)


def constant(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, backward):
    if _grad_enabled() and any(
        p.requires_grad or p._parents for p in parents
    ):
        return Tensor(value, parents=parents, backward=backward)
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise arithmetic ---------------------------------------------

def add(a, b):
    a, b = _lift(a), _lift(b)
    out = a.value + b.value

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g, b.value.shape))

    return _make(out, (a, b), backward)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    out = a.value - b.value

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g, a.value.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(-g, b.value.shape))

    return _make(out, (a, b), backward)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    out = a.value * b.value

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g * b.value, a.value.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(g * a.value, b.value.shape))

    return _make(out, (a, b), backward)


def div(a, b):
    a, b = _lift(a), _lift(b)
    out = a.value / b.value

    def backward(g):
        if a.requires_grad or a._parents:
            a._accumulate(_unbroadcast(g / b.value, a.value.shape))
        if b.requires_grad or b._parents:
            b._accumulate(_unbroadcast(-g * a.value / b.value**2, b.value.shape))

    return _make(out, (a, b), backward)


def power(a, p):
    a = _lift(a)
    if not isinstance(p, (int, float)):
        raise TypeError("exponent must be a python number")
    out = a.value**p

    def backward(g):
        a._accumulate(g * p * a.value ** (p - 1))

    return _make(out, (a,), backward)


def square(a):
    a = _lift(a)
    out = a.value * a.value

    def backward(g):
        a._accumulate(g * 2.0 * a.value)

    return _make(out, (a,), backward)


def exp(a):
    a = _lift(a)
    out = np.exp(a.value)

    def backward(g):
        a._accumulate(g * out)

    return _make(out, (a,), backward)


def log(a):
    a = _lift(a)
    out = np.log(a.value)

    def backward(g):
        a._accumulate(g / a.value)

    return _make(out, (a,), backward)


def sin(a):
    a = _lift(a)
    out = np.sin(a.value)

    def backward(g):
        a._accumulate(g * np.cos(a.value))

    return _make(out, (a,), backward)


def cos(a):
    a = _lift(a)
    out = np.cos(a.value)

    def backward(g):
        a._accumulate(-g * np.sin(a.value))

    return _make(out, (a,), backward)


# -- linear algebra -----------------------------------------------------

def matmul(a, b):
    a, b = _lift(a), _lift(b)
    out = a.value @ b.value

    def backward(g):
        if a.requires_grad or a._parents:
            ga = g @ np.swapaxes(b.value, -1, -2)
            a._accumulate(_unbroadcast(ga, a.value.shape))
        if b.requires_grad or b._parents:
            gb = np.swapaxes(a.value, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.value.shape))

    return _make(out, (a, b), backward)


def det(a):
    """Determinant over the trailing two axes.

    Gradient uses d det(A) = det(A) * A^{-T}, so the matrices must be
    invertible wherever a gradient is requested.
    """
    a = _lift(a)
    out = np.linalg.det(a.value)

    def backward(g):
        inv_t = np.swapaxes(np.linalg.inv(a.value), -1, -2)
        a._accumulate(g[..., None, None] * out[..., None, None] * inv_t)

    return _make(out, (a,), backward)


# -- shape manipulation --------------------------------------------------

def concat(parts, axis=-1):
    parts = [_lift(p) for p in parts]
    out = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad or p._parents:
                idx = [slice(None)] * g.ndim
                idx[axis if axis >= 0 else g.ndim + axis] = slice(lo, hi)
                p._accumulate(g[tuple(idx)])

    return _make(out, tuple(parts), backward)


def stack_last(parts):
    """Stack equal-shaped tensors along a new trailing axis."""
    parts = [_lift(p) for p in parts]
    out = np.stack([p.value for p in parts], axis=-1)

    def backward(g):
        for j, p in enumerate(parts):
            if p.requires_grad or p._parents:
                p._accumulate(g[..., j])

    return _make(out, tuple(parts), backward)


def getitem(a, idx):
    a = _lift(a)
    out = a.value[idx]
    plain = isinstance(idx, slice) or (
        isinstance(idx, tuple) and all(isinstance(i, (slice, int)) for i in idx))

    def backward(g):
        full = np.zeros_like(a.value)
        if plain:  # no duplicate positions possible
            full[idx] += g
        else:
            np.add.at(full, idx, g)
        a._accumulate(full)

    return _make(out, (a,), backward)


def reshape(a, shape):
    a = _lift(a)
    out = a.value.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.value.shape))

    return _make(out, (a,), backward)


# -- reductions -----------------------------------------------------------

def tsum(a, axis=None):
    a = _lift(a)
    out = a.value.sum(axis=axis)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.value.shape).copy())
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.value.shape).copy())

    return _make(out, (a,), backward)


def stable_mean(a):
    """Mean of a 1-D tensor via compensated (exact) summation.

    The forward value is independent of element order, so losses built on
    it agree bit-for-bit under sample permutations.
    """
    a = _lift(a)
    if a.value.ndim != 1:
        raise ValueError("stable_mean expects a 1-D tensor")
    n = a.value.shape[0]
    out = np.float64(math.fsum(a.value.tolist()) / n)

    def backward(g):
        a._accumulate(np.full_like(a.value, g / n))

    return _make(out, (a,), backward)


def stable_sum_scalars(tensors):
    """Order-independent sum of scalar tensors (exact rounding)."""
    tensors = [_lift(t) for t in tensors]
    out = np.float64(math.fsum(float(t.value) for t in tensors))

    def backward(g):
        for t in tensors:
            if t.requires_grad or t._parents:
                t._accumulate(np.asarray(g))

    return _make(out, tuple(tensors), backward)


# -- activations ----------------------------------------------------------

SELU_ALPHA = 1.6732632423543772
SELU_LAMBDA = 1.0507009873554805


def selu(a):
    a = _lift(a)
    x = a.value
    pos = x > 0.0
    expx = SELU_ALPHA * np.exp(np.minimum(x, 0.0))
    out = SELU_LAMBDA * np.where(pos, x, expx - SELU_ALPHA)
    deriv = SELU_LAMBDA * np.where(pos, 1.0, expx)

    def backward(g):
        a._accumulate(g * deriv)

    return _make(out, (a,), backward)


def softplus(a, beta=1.0):
    """Overflow-safe softplus log(1 + exp(beta*x)) / beta."""
    a = _lift(a)
    z = beta * a.value
    ez = np.exp(-np.abs(z))
    out = (np.maximum(z, 0.0) + np.log1p(ez)) / beta
    s = 1.0 / (1.0 + ez)
    sig = np.where(z >= 0.0, s, 1.0 - s)

    def backward(g):
        a._accumulate(g * sig)

    return _make(out, (a,), backward)


def leaky_relu(a, slope=0.01):
    a = _lift(a)
    x = a.value
    out = np.where(x >= 0.0, x, slope * x)

    def backward(g):
        a._accumulate(g * np.where(x >= 0.0, 1.0, slope))

    return _make(out, (a,), backward)


# -- interpolation ---------------------------------------------------------

def interp_query(grid, values, q):
    """Piecewise-linear interpolation, differentiable in the query points.

    `grid` (increasing) and `values` are fixed arrays; `q` may be a tensor.
    Queries are clamped to the grid ends (zero slope outside), matching
    np.interp.
    """
    grid = np.asarray(grid, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    q = _lift(q)
    out = np.interp(q.value, grid, values)
    seg = np.clip(np.searchsorted(grid, q.value, side="right") - 1, 0, len(grid) - 2)
    slopes = (values[seg + 1] - values[seg]) / (grid[seg + 1] - grid[seg])
    inside = (q.value >= grid[0]) & (q.value <= grid[-1])
    dq = np.where(inside, slopes, 0.0)

    def backward(g):
        q._accumulate(g * dq)

    return _make(out, (q,), backward)
