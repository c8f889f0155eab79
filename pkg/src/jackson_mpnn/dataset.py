"""Labelled samples, JSON Lines persistence and label standardization."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import queueing
from .exceptions import DatasetError, DegenerateLabels, LabelMismatch

LABEL_RTOL = 1e-6


@dataclass(eq=False)
class Sample:
    network: queueing.QueueNetwork
    W: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.W = float(self.W)

    def to_record(self) -> dict:
        net = self.network
        arcs = [[int(s), int(t), float(r)] for (s, t), r in zip(net.arcs.tolist(), net.routing.tolist())]
        return {
            "n": net.node_count,
            "arcs": arcs,
            "Lambda": net.external_intensity.tolist(),
            "mu": net.service_rate.tolist(),
            "W": self.W,
            "meta": self.meta,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Sample":
        arcs = rec.get("arcs", [])
        net = queueing.QueueNetwork(
            rec["n"],
            [(a[0], a[1]) for a in arcs],
            rec["Lambda"],
            rec["mu"],
            [a[2] for a in arcs],
        )
        return cls(net, rec["W"], dict(rec.get("meta", {})))

    def equals(self, other: "Sample") -> bool:
        return self.network.equals(other.network) and self.W == other.W and self.meta == other.meta


def label_sample(network: queueing.QueueNetwork, meta: dict | None = None) -> Sample:
    return Sample(network, queueing.solve(network).average_delay, meta or {})


def dumps_sample(sample: Sample) -> str:
    return json.dumps(sample.to_record(), separators=(",", ":"), sort_keys=False)


def write_dataset(samples, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(dumps_sample(s))
            fh.write("\n")


def _check_sample(sample, lineno, verify):
    if not (math.isfinite(sample.W) and sample.W > 0):
        raise DatasetError(f"label W must be a positive finite number, got {sample.W!r}", lineno)
    problems = queueing.validate(sample.network)
    if problems:
        raise DatasetError("invalid network: " + "; ".join(problems), lineno)
    if verify:
        try:
            W = queueing.average_delay(sample.network, queueing.solve_intensities(sample.network)).average_delay
        except Exception as exc:
            raise LabelMismatch(f"label cannot be recomputed: {exc}", lineno) from exc
        if abs(W - sample.W) > LABEL_RTOL * abs(W):
            raise LabelMismatch(f"stored W={sample.W!r} but the network gives W={W!r}", lineno)


def read_dataset(path, verify: bool = True) -> list[Sample]:
    """Read a JSONL dataset, validating each network and (optionally) its label."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                sample = Sample.from_record(json.loads(line))
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                raise DatasetError(f"malformed sample: {exc}", lineno) from exc
            _check_sample(sample, lineno, verify)
            samples.append(sample)
    return samples


def read_networks(path) -> list[queueing.QueueNetwork]:
    """Read bare networks from a JSON document or JSONL file; ``W`` is optional."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.strip()
    records = []
    if stripped.startswith("["):
        records = json.loads(stripped)
    else:
        for lineno, line in enumerate(text.splitlines(), start=1):
            if line.strip():
                try:
                    records.append(json.loads(line))
                except ValueError as exc:
                    raise DatasetError(f"malformed JSON: {exc}", lineno) from exc
    nets = []
    for lineno, rec in enumerate(records, start=1):
        try:
            nets.append(Sample.from_record({**rec, "W": rec.get("W", 1.0)}).network)
        except (KeyError, TypeError, IndexError, ValueError) as exc:
            raise DatasetError(f"malformed network: {exc}", lineno) from exc
    return nets


@dataclass
class LabelTransform:
    """Standardization ``(W - mean) / std`` fitted on training labels only."""

    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise DegenerateLabels(f"label standard deviation must be positive, got {self.std}")

    def apply(self, W):
        return (np.asarray(W, dtype=np.float64) - self.mean) / self.std

    def invert(self, y):
        return np.asarray(y, dtype=np.float64) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean, "std": self.std}


def fit_label_transform(labels) -> LabelTransform:
    W = np.asarray([s.W if isinstance(s, Sample) else s for s in labels], dtype=np.float64)
    if W.size < 2:
        raise DegenerateLabels("at least two labels are needed to fit a transform")
    std = float(W.std())
    if std == 0.0:
        raise DegenerateLabels("all labels are identical")
    return LabelTransform(float(W.mean()), std)


def fingerprint(sample: Sample) -> str:
    """Content hash of the network, used to check that splits are disjoint."""
    net = sample.network
    h = hashlib.sha256()
    for arr in (net.arcs, net.external_intensity, net.service_rate, net.routing):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
