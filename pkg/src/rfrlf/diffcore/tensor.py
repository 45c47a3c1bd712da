"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: each operation returns a new Tensor holding the forward
value plus a closure that scatters the upstream gradient into the
operation's parents.  Graphs here are tiny (tens to hundreds of nodes),
so clarity wins over cleverness.  Gradients always accumulate in
float64, whatever the storage dtype of the forward values.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ShapeMismatchError
from . import kernels


class Tensor:
    """A node in the computation graph: forward value + backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple["Tensor", ...] = (),
                 backward: Callable[[np.ndarray], None] | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        # grads are only ever rebound (never mutated in place), so holding a
        # view or a shared array here is safe
        g = np.asarray(g, dtype=np.float64)
        self.grad = g if self.grad is None else self.grad + g

    def backward(self) -> None:
        """Backpropagate from a scalar output through the tape."""
        if self.data.ndim != 0:
            raise ShapeMismatchError(f"backward requires a scalar output, got shape {self.data.shape}")
        order: list[Tensor] = []
        state: dict[int, int] = {}
        stack: list[Tensor] = [self]
        while stack:
            node = stack.pop()
            st = state.get(id(node), 0)
            if st == 0:
                state[id(node)] = 1
                stack.append(node)
                for p in node._parents:
                    if p.requires_grad and state.get(id(p), 0) == 0:
                        stack.append(p)
            elif st == 1:
                state[id(node)] = 2
                order.append(node)
        self.grad = np.ones((), dtype=np.float64)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # Convenience operators; all defer to the module-level ops.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __neg__(self):
        return scale(self, -1.0)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g over axes that were broadcast so it matches the parent shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ps) in enumerate(zip(g.shape, shape)) if ps == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# arithmetic

def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data - b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(-_unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    out_data = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=backward)


def scale(a: Tensor, s: float) -> Tensor:
    a = _wrap(a)
    s = float(s)

    def backward(g):
        a._accumulate(g * s)

    return Tensor(a.data * s, parents=(a,), backward=backward)


def square(a: Tensor) -> Tensor:
    a = _wrap(a)

    def backward(g):
        a._accumulate(g * (2.0 * np.asarray(a.data, np.float64)))

    return Tensor(a.data * a.data, parents=(a,), backward=backward)


def mean_all(a: Tensor) -> Tensor:
    a = _wrap(a)
    n = a.data.size

    def backward(g):
        a._accumulate(np.full(a.data.shape, float(g) / n, dtype=np.float64))

    return Tensor(np.asarray(a.data, np.float64).mean(), parents=(a,), backward=backward)


def sum_all(a: Tensor) -> Tensor:
    a = _wrap(a)

    def backward(g):
        a._accumulate(np.full(a.data.shape, float(g), dtype=np.float64))

    return Tensor(np.asarray(a.data, np.float64).sum(), parents=(a,), backward=backward)


# ---------------------------------------------------------------------------
# activations

def relu(a: Tensor) -> Tensor:
    a = _wrap(a)
    out_data = np.maximum(a.data, 0)
    # subgradient at exactly zero is zero
    mask = a.data > 0

    def backward(g):
        a._accumulate(g * mask)

    return Tensor(out_data, parents=(a,), backward=backward)


def sigmoid(a: Tensor) -> Tensor:
    a = _wrap(a)
    y = kernels.sigmoid_fwd(a.data)

    def backward(g):
        a._accumulate(g * y * (1.0 - y))

    return Tensor(y.astype(a.data.dtype, copy=False), parents=(a,), backward=backward)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = _wrap(a)
    y = kernels.softmax_fwd(a.data, axis=axis)

    def backward(g):
        a._accumulate(kernels.softmax_bwd(g, y, axis=axis))

    return Tensor(y.astype(a.data.dtype, copy=False), parents=(a,), backward=backward)


# ---------------------------------------------------------------------------
# network primitives

def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    x, w, b = _wrap(x), _wrap(w), _wrap(b)
    out_data = kernels.dense_fwd(x.data, w.data, b.data)

    def backward(g):
        dx, dw, db = kernels.dense_bwd(g, x.data, w.data)
        x._accumulate(dx)
        w._accumulate(dw)
        b._accumulate(db)

    return Tensor(out_data, parents=(x, w, b), backward=backward)


def matvec(x: Tensor, w: Tensor) -> Tensor:
    """Dense layer without a bias term (used by the action-injection maps)."""
    x, w = _wrap(x), _wrap(w)
    zero = np.zeros(w.data.shape[0], dtype=w.data.dtype)
    out_data = kernels.dense_fwd(x.data, w.data, zero)

    def backward(g):
        dx, dw, _ = kernels.dense_bwd(g, x.data, w.data)
        x._accumulate(dx)
        w._accumulate(dw)

    return Tensor(out_data, parents=(x, w), backward=backward)


def conv2d(x: Tensor, k: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    x, k, b = _wrap(x), _wrap(k), _wrap(b)
    out_data = kernels.conv2d_fwd(x.data, k.data, b.data, stride, padding)

    def backward(g):
        dx, dk, db = kernels.conv2d_bwd(g, x.data, k.data, stride, padding)
        x._accumulate(dx)
        k._accumulate(dk)
        b._accumulate(db)

    return Tensor(out_data, parents=(x, k, b), backward=backward)


def deconv2d(x: Tensor, k: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    x, k, b = _wrap(x), _wrap(k), _wrap(b)
    out_data = kernels.deconv2d_fwd(x.data, k.data, b.data, stride, padding)

    def backward(g):
        dx, dk, db = kernels.deconv2d_bwd(g, x.data, k.data, stride, padding)
        x._accumulate(dx)
        k._accumulate(dk)
        b._accumulate(db)

    return Tensor(out_data, parents=(x, k, b), backward=backward)


def normalize(x: Tensor, kind: str, gain: Tensor, shift: Tensor,
              eps: float = kernels.NORM_EPS) -> Tensor:
    x, gain, shift = _wrap(x), _wrap(gain), _wrap(shift)
    out_data, cache = kernels.norm_fwd(x.data, kind, gain.data, shift.data, eps)

    def backward(g):
        dx, dgain, dshift = kernels.norm_bwd(g, cache)
        x._accumulate(dx)
        gain._accumulate(dgain)
        shift._accumulate(dshift)

    return Tensor(out_data, parents=(x, gain, shift), backward=backward)


# ---------------------------------------------------------------------------
# structure

def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    a = _wrap(a)

    def backward(g):
        a._accumulate(np.reshape(g, a.data.shape))

    return Tensor(a.data.reshape(shape), parents=(a,), backward=backward)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [_wrap(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]

    def backward(g):
        start = 0
        for p, size in zip(parts, sizes):
            idx = [slice(None)] * g.ndim
            idx[axis if axis >= 0 else g.ndim + axis] = slice(start, start + size)
            p._accumulate(g[tuple(idx)])
            start += size

    return Tensor(out_data, parents=tuple(parts), backward=backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    a = _wrap(a)
    idx = [slice(None)] * a.data.ndim
    ax = axis if axis >= 0 else a.data.ndim + axis
    idx[ax] = slice(start, start + length)
    idx = tuple(idx)

    def backward(g):
        full = np.zeros(a.data.shape, dtype=np.float64)
        full[idx] = g
        a._accumulate(full)

    return Tensor(a.data[idx], parents=(a,), backward=backward)


def stop_gradient(a: Tensor) -> Tensor:
    a = _wrap(a)
    return Tensor(a.data)


def straight_through(soft: Tensor, hard_data: np.ndarray) -> Tensor:
    """Forward the hard value, route the gradient to the soft relaxation."""
    soft = _wrap(soft)
    hard_data = np.asarray(hard_data)
    if hard_data.shape != soft.data.shape:
        raise ShapeMismatchError(
            f"straight-through shapes differ: {hard_data.shape} vs {soft.data.shape}")

    def backward(g):
        soft._accumulate(g)

    return Tensor(hard_data, parents=(soft,), backward=backward)
