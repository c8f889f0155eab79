"""Parameter storage, initialization and the Adam optimizer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: tuple
    kind: str = "weight"  # weight | bias | gamma | beta


class ParamStore:
    """Named float64 parameters with gradient accumulators and Adam moments."""

    def __init__(self):
        self.values: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name, value):
        if name in self.values:
            raise KeyError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def names(self):
        return list(self.values)

    @property
    def size(self) -> int:
        return int(sum(v.size for v in self.values.values()))

    def leaves(self) -> dict[str, Tensor]:
        """Fresh leaf tensors sharing memory with the stored values."""
        return {k: Tensor(v, requires_grad=True, name=k) for k, v in self.values.items()}

    def accumulate(self, leaves: dict[str, Tensor]) -> None:
        for k, t in leaves.items():
            if t.grad is not None:
                self.grads[k] += t.grad

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> "ParamStore":
        new = ParamStore()
        for k in self.values:
            new.values[k] = self.values[k].copy()
            new.grads[k] = self.grads[k].copy()
            new.m[k] = self.m[k].copy()
            new.v[k] = self.v[k].copy()
        new.step = self.step
        return new

    def equals(self, other: "ParamStore") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(self.values[k], other.values[k]) for k in self.values
        )


def init_params(specs, rng: np.random.Generator) -> ParamStore:
    """Weights ~ N(0, 1/fan_in) with fan_in = last dimension; biases/shifts zero, scales one."""
    store = ParamStore()
    for s in specs:
        if s.kind == "weight":
            fan_in = s.shape[-1]
            value = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=s.shape)
        elif s.kind in ("bias", "beta"):
            value = np.zeros(s.shape)
        elif s.kind == "gamma":
            value = np.ones(s.shape)
        else:
            raise ValueError(f"unknown parameter kind {s.kind!r}")
        store.add(s.name, value)
    return store


def adam_step(store: ParamStore, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8) -> ParamStore:
    """Bias-corrected Adam update in place; gradients are zeroed afterwards."""
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for k, p in store.values.items():
        g = store.grads[k]
        m, v = store.m[k], store.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        g.fill(0.0)
    return store
