"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .params import ParamStore


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    coordinates_checked: int
    per_parameter: dict = field(default_factory=dict)
    worst: tuple = None

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tol)

    def group_errors(self, groups) -> dict:
        """Max error per group, where ``groups`` maps a group label to name prefixes."""
        out = {}
        for label, prefixes in groups.items():
            errs = [e for k, e in self.per_parameter.items() if k.startswith(tuple(prefixes))]
            out[label] = max(errs) if errs else None
        return out


def analytic_gradients(loss_fn, store: ParamStore) -> tuple[float, dict]:
    leaves = store.leaves()
    loss = loss_fn(leaves)
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value)) for k, t in leaves.items()}
    return float(loss.value), grads


def _loss_value(loss_fn, store):
    return float(loss_fn(store.leaves()).value)


def gradient_check(
    loss_fn,
    store: ParamStore,
    eps: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    analytic: dict | None = None,
    floor: float = 1e-7,
) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` takes a dict of leaf tensors (see ``ParamStore.leaves``) and
    returns a scalar tensor; it must be deterministic. If the store has more
    than ``max_coords`` coordinates a random subset of ``max(200, max_coords)``
    is checked. ``analytic`` overrides the backprop gradients (used for
    negative controls). The relative error of a coordinate is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    if analytic is None:
        _, analytic = analytic_gradients(loss_fn, store)

    coords = [(k, i) for k in store.names() for i in range(store[k].size)]
    if max_coords is not None and len(coords) > max_coords:
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=max(200, max_coords), replace=False)
        coords = [coords[j] for j in sorted(pick)]

    per_param = {}
    worst = None
    max_err = 0.0
    for name, i in coords:
        flat = store[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        up = _loss_value(loss_fn, store)
        flat[i] = orig - eps
        down = _loss_value(loss_fn, store)
        flat[i] = orig
        numeric = (up - down) / (2.0 * eps)
        a = float(analytic[name].reshape(-1)[i])
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        per_param[name] = max(per_param.get(name, 0.0), err)
        if err >= max_err:
            max_err = err
            worst = (name, i, a, numeric)
    return GradCheckReport(max_err, tol, len(coords), per_param, worst)
