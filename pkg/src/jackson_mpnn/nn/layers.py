"""Dense layers, the GRU cell and batch normalization on top of the tape."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import BatchTooSmall, ShapeMismatch
from .autodiff import Tensor, _node, as_tensor, linear, selu, selu_array

GRU_NAMES = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")


def dense_forward(W, b, x) -> Tensor:
    """``W x + b`` (rows of a 2-d ``x`` are mapped independently)."""
    return linear(x, W, b)


def mlp(x, layers, hidden=selu) -> Tensor:
    """Stack of dense layers; ``hidden`` after every layer but the last.

    ``layers`` is a sequence of ``(W, b)`` pairs.
    """
    for k, (W, b) in enumerate(layers):
        x = linear(x, W, b)
        if k < len(layers) - 1:
            x = hidden(x)
    return x


def _sig(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_forward(weights, hv, mv):
    """GRU on arrays; returns the new state and a cache for ``gru_backward``."""
    Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh = weights
    z = _sig(mv @ Wz.T + hv @ Uz.T + bz)
    r = _sig(mv @ Wr.T + hv @ Ur.T + br)
    rh = r * hv
    c = np.tanh(mv @ Wh.T + rh @ Uh.T + bh)
    return (1.0 - z) * hv + z * c, (hv, mv, z, r, rh, c)


def gru_backward(weights, cache, g):
    """Gradients w.r.t. (h, m) and the nine GRU parameters, in ``GRU_NAMES`` order."""
    Wz, Uz, _, Wr, Ur, _, Wh, Uh, _ = weights
    hv, mv, z, r, rh, c = cache
    dz = g * (c - hv)
    dah = g * z * (1.0 - c * c)
    drh = dah @ Uh
    dar = drh * hv * r * (1.0 - r)
    daz = dz * z * (1.0 - z)
    dh = g * (1.0 - z) + drh * r + dar @ Ur + daz @ Uz
    dm = dah @ Wh + dar @ Wr + daz @ Wz
    grads = (
        daz.T @ mv, daz.T @ hv, daz.sum(axis=0),
        dar.T @ mv, dar.T @ hv, dar.sum(axis=0),
        dah.T @ mv, dah.T @ rh, dah.sum(axis=0),
    )
    return dh, dm, grads


def gru_step(params, h, m) -> Tensor:
    """One GRU update: ``h' = (1 - z) * h + z * tanh(W_h m + U_h (r * h) + b_h)``.

    ``z = sigmoid(W_z m + U_z h + b_z)`` and ``r = sigmoid(W_r m + U_r h + b_r)``.
    ``params`` maps the names in ``GRU_NAMES`` to tensors or arrays. ``h`` and
    ``m`` may be vectors or stacks of row vectors.
    """
    h, m = as_tensor(h), as_tensor(m)
    P = [as_tensor(params[k]) for k in GRU_NAMES]
    weights = [p.value for p in P]
    d = weights[1].shape[0]
    d_in = weights[0].shape[1]
    if h.shape[-1] != d or m.shape[-1] != d_in or h.value.ndim != m.value.ndim:
        raise ShapeMismatch(f"GRU expects h[..., {d}] and m[..., {d_in}], got {h.shape} and {m.shape}")
    if h.value.ndim == 2 and h.shape[0] != m.shape[0]:
        raise ShapeMismatch("h and m must have the same number of rows")
    vector = h.value.ndim == 1
    out, cache = gru_forward(weights, np.atleast_2d(h.value), np.atleast_2d(m.value))

    def back(g):
        dh, dm, grads = gru_backward(weights, cache, np.atleast_2d(g))
        if vector:
            dh, dm = dh[0], dm[0]
        return (dh, dm) + grads

    return _node("gru", out[0] if vector else out, (h, m, *P), back)


@dataclass(eq=False)
class BatchNormState:
    """Per-feature scale/shift plus running statistics for inference."""

    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    training: bool = True
    momentum: float = 0.99
    eps: float = 1e-5

    @classmethod
    def create(cls, dim, **kw):
        return cls(np.ones(dim), np.zeros(dim), np.zeros(dim), np.ones(dim), **kw)

    @property
    def dim(self):
        return self.gamma.shape[0]


def batch_norm(state: BatchNormState, X, gamma=None, beta=None) -> Tensor:
    """Normalize each feature of ``X`` (batch, d).

    Training mode uses batch statistics and updates the running averages;
    inference mode uses the running averages and is affine per feature.
    ``gamma``/``beta`` default to the state's own arrays (as constants).
    """
    X = as_tensor(X)
    gamma = as_tensor(state.gamma if gamma is None else gamma)
    beta = as_tensor(state.beta if beta is None else beta)
    xv = X.value
    if xv.ndim != 2 or xv.shape[1] != state.dim:
        raise ShapeMismatch(f"batch_norm expects (batch, {state.dim}), got {xv.shape}")
    gv = gamma.value
    N = xv.shape[0]

    if state.training:
        if N < 2:
            raise BatchTooSmall(f"batch normalization in training mode needs >= 2 rows, got {N}")
        mu = xv.mean(axis=0)
        var = xv.var(axis=0)
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = (xv - mu) * inv
        m = state.momentum
        state.running_mean = m * state.running_mean + (1.0 - m) * mu
        state.running_var = m * state.running_var + (1.0 - m) * var * (N / (N - 1))

        def back(g):
            gx_hat = g * gv
            gx = inv / N * (N * gx_hat - gx_hat.sum(axis=0) - xhat * (gx_hat * xhat).sum(axis=0))
            return gx, (g * xhat).sum(axis=0), g.sum(axis=0)
    else:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (xv - state.running_mean) * inv

        def back(g):
            return g * gv * inv, (g * xhat).sum(axis=0), g.sum(axis=0)

    out = xhat * gv + beta.value
    return _node("batch_norm", out, (X, gamma, beta), back)


__all__ = [
    "BatchNormState",
    "GRU_NAMES",
    "batch_norm",
    "dense_forward",
    "gru_backward",
    "gru_forward",
    "gru_step",
    "mlp",
    "selu",
    "selu_array",
]
