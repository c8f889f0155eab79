"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

import numpy as np

from .dataset import Sample
from .queueing import QueueNetwork


def check_networks(X, name="X") -> list[QueueNetwork]:
    """Coerce ``X`` to a non-empty list of networks.

    Accepts networks, samples (their network is used) or JSON-style records.
    """
    if isinstance(X, (QueueNetwork, Sample, dict)):
        raise TypeError(f"{name} must be a sequence of networks, not a single {type(X).__name__}")
    try:
        items = list(X)
    except TypeError:
        raise TypeError(f"{name} must be a sequence of networks") from None
    if not items:
        raise ValueError(f"{name} is empty")
    out = []
    for i, item in enumerate(items):
        if isinstance(item, Sample):
            out.append(item.network)
        elif isinstance(item, QueueNetwork):
            out.append(item)
        elif isinstance(item, dict):
            rec = dict(item)
            rec.setdefault("W", 1.0)
            out.append(Sample.from_record(rec).network)
        else:
            raise TypeError(f"{name}[{i}] is a {type(item).__name__}, expected a QueueNetwork")
    return out


def check_labels(y, n_samples, name="y") -> np.ndarray:
    """1-D float64 array of ``n_samples`` finite, positive delays."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2 and y.shape[1] == 1:
        y = y[:, 0]
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if y.shape[0] != n_samples:
        raise ValueError(f"{name} has {y.shape[0]} entries for {n_samples} networks")
    if not np.all(np.isfinite(y)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(y <= 0):
        raise ValueError(f"{name} must be positive (delays)")
    return y


def labels_from(X) -> np.ndarray | None:
    """Labels carried by samples in ``X``, or ``None`` when any item has none."""
    items = list(X)
    if items and all(isinstance(s, Sample) for s in items):
        return np.array([s.W for s in items])
    return None
