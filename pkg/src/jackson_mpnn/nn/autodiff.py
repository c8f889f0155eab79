"""Tiny reverse-mode automatic differentiation over numpy arrays.

Every operation returns a :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. ``backward`` walks the
recorded graph in reverse topological order. Everything is float64.
"""
from __future__ import annotations

import contextlib
from collections import Counter

import numpy as np
import scipy.sparse as sp

from ..exceptions import ShapeMismatch

SELU_SCALE = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

_counters: list[Counter] = []


@contextlib.contextmanager
def count_ops():
    """Count output elements produced per operation name inside the block."""
    c = Counter()
    _counters.append(c)
    try:
        yield c
    finally:
        _counters.remove(c)


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")

    def __init__(self, value, parents=(), backward_fn=None, requires_grad=False, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}{', name=' + self.name if self.name else ''})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def backward(self, grad=None):
        backward(self, grad)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def param(value, name=None) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def _node(name, value, parents, backward_fn):
    if _counters:
        for c in _counters:
            c[name] += value.size
    if not any(p.requires_grad for p in parents):
        return Tensor(value)
    return Tensor(value, parents, backward_fn, name=name)


def backward(root: Tensor, grad=None) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` of every leaf requiring grad."""
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    root.grad = np.ones_like(root.value) if grad is None else np.asarray(grad, dtype=np.float64)
    for node in reversed(order):
        if node.backward_fn is None or node.grad is None:
            continue
        grads = node.backward_fn(node.grad)
        for p, g in zip(node.parents, grads):
            if g is None or not p.requires_grad:
                continue
            p.grad = g if p.grad is None else p.grad + g
        if node.parents:
            node.grad = None


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value + b.value
    return _node("add", out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.value - b.value
    return _node("sub", out, (a, b), lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return _node("mul", av * bv, (a, b), lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def square(a) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return _node("square", av * av, (a,), lambda g: (2.0 * av * g,))


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.value.size
    return _node("mean", np.asarray(a.value.mean()), (a,), lambda g: (np.full(a.shape, g / n),))


def sum_all(a) -> Tensor:
    a = as_tensor(a)
    return _node("sum", np.asarray(a.value.sum()), (a,), lambda g: (np.full(a.shape, g),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node("reshape", a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.value for t in tensors], axis=axis)
    return _node("concat", out, tuple(tensors), lambda g: tuple(np.split(g, cuts, axis=axis)))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _node("sigmoid", s, (a,), lambda g: (g * s * (1.0 - s),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.value)
    return _node("tanh", t, (a,), lambda g: (g * (1.0 - t * t),))


def selu_array(x):
    x = np.asarray(x, dtype=np.float64)
    return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))


def selu(a) -> Tensor:
    a = as_tensor(a)
    x = a.value
    neg = SELU_SCALE * SELU_ALPHA * np.exp(np.minimum(x, 0.0))
    out = np.where(x > 0, SELU_SCALE * x, neg - SELU_SCALE * SELU_ALPHA)
    dx = np.where(x > 0, SELU_SCALE, neg)
    return _node("selu", out, (a,), lambda g: (g * dx,))


def linear(x, W, b=None) -> Tensor:
    """Row-wise affine map ``x @ W.T + b`` with ``W`` of shape (out, in).

    A 1-d ``x`` is treated as a single column vector, giving ``W x + b``.
    """
    x, W = as_tensor(x), as_tensor(W)
    if W.value.ndim != 2 or x.shape[-1] != W.shape[1]:
        raise ShapeMismatch(f"cannot apply weight of shape {W.shape} to input of shape {x.shape}")
    xv, Wv = x.value, W.value
    out = xv @ Wv.T
    parents = (x, W)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[0],):
            raise ShapeMismatch(f"bias shape {b.shape} does not match output size {W.shape[0]}")
        out = out + b.value
        parents = (x, W, b)

    def back(g):
        gx = g @ Wv
        if xv.ndim == 1:
            gW = np.outer(g, xv)
            gb = g
        else:
            gW = g.T @ xv
            gb = g.sum(axis=0)
        return (gx, gW, gb) if b is not None else (gx, gW)

    return _node("linear", out, parents, back)


def batched_matvec(A, h) -> Tensor:
    """``out[k] = A[k] @ h[k]`` for A of shape (K, d, d') and h of shape (K, d')."""
    A, h = as_tensor(A), as_tensor(h)
    Av, hv = A.value, h.value
    out = np.einsum("kij,kj->ki", Av, hv)
    return _node(
        "batched_matvec",
        out,
        (A, h),
        lambda g: (g[:, :, None] * hv[:, None, :], np.einsum("kij,ki->kj", Av, g)),
    )


def sparse_matmul(S: sp.spmatrix, x) -> Tensor:
    """``S @ x`` for a constant sparse matrix; covers gathers and segment sums."""
    x = as_tensor(x)
    St = S.T.tocsr()
    return _node("sparse_matmul", np.asarray(S @ x.value), (x,), lambda g: (np.asarray(St @ g),))


def take_rows(x, index, n_rows=None) -> Tensor:
    """``x[index]``; the gradient scatters back with a fixed summation order."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0] if n_rows is None else n_rows
    scatter = sp.csr_matrix((np.ones(index.size), (index, np.arange(index.size))), shape=(n, index.size))
    return _node("take_rows", x.value[index], (x,), lambda g: (np.asarray(scatter @ g),))


def mse(pred, target) -> Tensor:
    pred = as_tensor(pred)
    t = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    diff = pred.value - t
    n = diff.size
    return _node("mse", np.asarray(np.mean(diff * diff)), (pred,), lambda g: (g * 2.0 * diff / n,))
