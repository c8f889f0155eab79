"""Mini-batch training with periodic testing and best-checkpoint retention."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dataset import LabelTransform, Sample, fingerprint, fit_label_transform
from .exceptions import NonFiniteLoss
from .model import MPNN, GraphBatch, ModelConfig, fit_input_scale
from .nn import autodiff as ad
from .nn import checkpoint
from .nn.params import adam_step
from .seeding import derive_seed, make_rng

log = logging.getLogger(__name__)

CURVE_HEADER = ["step", "train_mse", "test_mse", "train_mse_smooth", "test_mse_smooth"]


@dataclass
class TrainConfig:
    steps: int = 20_000
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_interval: int = 100
    smoothing: float = 0.9
    calibration_size: int = 512
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (batch normalization)")
        if self.eval_interval < 1:
            raise ValueError("eval_interval must be >= 1")
        if not 0.0 <= self.smoothing < 1.0:
            raise ValueError("smoothing must lie in [0, 1)")


@dataclass
class CurvePoint:
    step: int
    train_mse: float
    test_mse: float
    train_mse_smooth: float
    test_mse_smooth: float


@dataclass
class TrainingCurve:
    records: list = field(default_factory=list)
    smoothing: float = 0.9

    def append(self, step, train_mse, test_mse):
        if self.records and step <= self.records[-1].step:
            raise ValueError("curve steps must be strictly increasing")
        a = self.smoothing
        if self.records:
            prev = self.records[-1]
            ts = a * prev.train_mse_smooth + (1 - a) * train_mse
            vs = a * prev.test_mse_smooth + (1 - a) * test_mse if math.isfinite(test_mse) else prev.test_mse_smooth
        else:
            ts, vs = train_mse, test_mse
        self.records.append(CurvePoint(step, train_mse, test_mse, ts, vs))

    def __len__(self):
        return len(self.records)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CURVE_HEADER)
            for r in self.records:
                w.writerow([r.step, repr(r.train_mse), repr(r.test_mse), repr(r.train_mse_smooth), repr(r.test_mse_smooth)])

    @classmethod
    def read_csv(cls, path, smoothing=0.9):
        curve = cls(smoothing=smoothing)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                curve.records.append(CurvePoint(int(row["step"]), *(float(row[k]) for k in CURVE_HEADER[1:])))
        return curve

    def to_dicts(self):
        return [asdict(r) for r in self.records]


@dataclass
class TrainResult:
    """``model`` is the best-test-MSE snapshot (the final model when there is no test set)."""

    model: MPNN
    final_model: MPNN
    curve: TrainingCurve
    transform: LabelTransform
    best_step: int
    best_test_mse: float
    steps_done: int
    config: ModelConfig = None


def _check_disjoint(train_set, test_set):
    seen = {fingerprint(s) for s in train_set}
    overlap = sum(fingerprint(s) in seen for s in test_set)
    if overlap:
        raise ValueError(f"training and test sets share {overlap} network(s); they must be disjoint")


def batch_mse(model: MPNN, samples, transform, batch_size=256) -> float:
    """Inference-mode MSE in the standardized label space."""
    err, n = 0.0, 0
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo : lo + batch_size]
        batch = GraphBatch([s.network for s in chunk])
        pred = model.predict(batch)
        y = transform.apply([s.W for s in chunk])
        err += float(np.sum((pred - y) ** 2))
        n += len(chunk)
    return err / n


def _epoch_order(seed, epoch, n):
    return make_rng(derive_seed(seed, "epoch", epoch)).permutation(n)


def train(
    train_set: list[Sample],
    test_set: list[Sample] | None,
    cfg: ModelConfig | None = None,
    hyper: TrainConfig | None = None,
    resume: dict | None = None,
    transform: LabelTransform | None = None,
    callback=None,
) -> TrainResult:
    """Minimize MSE on standardized labels with Adam over mini-batches of graphs.

    Batches are drawn without replacement; each epoch is a fresh permutation
    derived from ``(hyper.seed, epoch)`` and the incomplete tail is dropped, so
    the batch at any global step is reproducible. Every ``eval_interval``
    steps the batch-norm statistics are recomputed over a fixed subset of the
    training set, then the mean training mini-batch loss and the
    inference-mode test MSE are appended to the curve; the parameters with the
    lowest test MSE are kept. ``resume`` (from :func:`load_training_state`) continues a run.
    """
    cfg = cfg or ModelConfig()
    hyper = hyper or TrainConfig()
    train_set = list(train_set)
    test_set = list(test_set or [])
    if len(train_set) < hyper.batch_size:
        raise ValueError(f"training set ({len(train_set)}) is smaller than one batch ({hyper.batch_size})")
    if test_set:
        _check_disjoint(train_set, test_set)

    if resume is not None:
        model = resume["model"]
        cfg = model.cfg
        transform = resume["transform"]
        start = resume["step"]
        curve = resume["curve"]
        best = resume.get("best_model") or model.copy()
        best_step = resume.get("best_step", start)
        best_mse = resume.get("best_test_mse", math.inf)
    else:
        transform = transform or fit_label_transform(train_set)
        model = MPNN(cfg, make_rng(derive_seed(hyper.seed, "init")))
        model.input_scale = fit_input_scale([s.network for s in train_set])
        start = 0
        curve = TrainingCurve(smoothing=hyper.smoothing)
        best, best_step, best_mse = model.copy(), 0, math.inf

    y_all = transform.apply([s.W for s in train_set])
    nets = [s.network for s in train_set]
    per_epoch = len(train_set) // hyper.batch_size
    calib_idx = make_rng(derive_seed(hyper.seed, "calibration")).permutation(len(train_set))[: hyper.calibration_size]
    calib = [GraphBatch([nets[i] for i in calib_idx[lo : lo + 256]]) for lo in range(0, len(calib_idx), 256)]
    epoch, order = None, None
    window = []

    for step in range(start, hyper.steps):
        e, pos = divmod(step, per_epoch)
        if e != epoch:
            epoch, order = e, _epoch_order(hyper.seed, e, len(train_set))
        idx = order[pos * hyper.batch_size : (pos + 1) * hyper.batch_size]
        batch = GraphBatch([nets[i] for i in idx], y_all[idx])

        leaves = model.store.leaves()
        loss = ad.mse(model.forward(batch, leaves, training=True), batch.labels)
        value = float(loss.value)
        if not math.isfinite(value):
            raise NonFiniteLoss(step + 1, derive_seed(hyper.seed, "epoch", epoch), value)
        loss.backward()
        model.store.accumulate(leaves)
        adam_step(model.store, hyper.learning_rate, hyper.beta1, hyper.beta2, hyper.adam_eps)
        window.append(value)

        done = step + 1
        if done % hyper.eval_interval == 0 or done == hyper.steps:
            train_mse = float(np.mean(window))
            window = []
            if calib:
                model.calibrate_batch_norm(calib)
            test_mse = batch_mse(model, test_set, transform) if test_set else math.nan
            curve.append(done, train_mse, test_mse)
            if not test_set or test_mse < best_mse:
                best, best_step = model.copy(), done
                best_mse = test_mse if test_set else best_mse
            log.info("step %d train %.5f test %.5f", done, train_mse, test_mse)
            if callback is not None:
                callback(done, model, curve)

    return TrainResult(best, model, curve, transform, best_step, best_mse, hyper.steps, cfg)


# --- checkpoints -----------------------------------------------------------------


def checkpoint_header(model: MPNN, transform: LabelTransform, extra: dict | None = None) -> dict:
    header = {
        "kind": "jackson_mpnn.model",
        "model": model.cfg.to_dict(),
        "label_transform": transform.to_dict(),
        "optimizer_step": model.store.step,
    }
    if extra:
        header.update(extra)
    return header


def save_model(path, model: MPNN, transform: LabelTransform, extra: dict | None = None, optimizer=False):
    arrays = model.state_arrays()
    if optimizer:
        arrays.update(model.optimizer_arrays())
    checkpoint.save(path, checkpoint_header(model, transform, extra), arrays)


def load_model(path) -> tuple[MPNN, LabelTransform, dict]:
    header, arrays = checkpoint.load(path)
    cfg = ModelConfig(**header["model"])
    model = MPNN(cfg, store=None)
    model.load_arrays(arrays, header.get("optimizer_step", 0))
    lt = header["label_transform"]
    return model, LabelTransform(lt["mean"], lt["std"]), header


def save_training_state(path, result: TrainResult, hyper: TrainConfig):
    """Final model plus everything needed to continue the same run."""
    extra = {
        "training": {
            "hyper": asdict(hyper),
            "step": result.steps_done,
            "best_step": result.best_step,
            "best_test_mse": result.best_test_mse if math.isfinite(result.best_test_mse) else None,
            "curve": result.curve.to_dicts(),
        }
    }
    arrays = result.final_model.state_arrays()
    arrays.update(result.final_model.optimizer_arrays())
    arrays.update({f"best/{k}": v for k, v in result.model.state_arrays().items()})
    checkpoint.save(path, checkpoint_header(result.final_model, result.transform, extra), arrays)


def load_training_state(path) -> tuple[dict, TrainConfig]:
    header, arrays = checkpoint.load(path)
    if "training" not in header:
        raise ValueError(f"{path} holds no training state; save it with save_training_state")
    cfg = ModelConfig(**header["model"])
    model = MPNN(cfg)
    model.load_arrays(arrays, header.get("optimizer_step", 0))
    best = MPNN(cfg)
    best.load_arrays({k[5:]: v for k, v in arrays.items() if k.startswith("best/")})
    tr = header["training"]
    curve = TrainingCurve(smoothing=tr["hyper"]["smoothing"])
    curve.records = [CurvePoint(**r) for r in tr["curve"]]
    lt = header["label_transform"]
    state = {
        "model": model,
        "best_model": best,
        "transform": LabelTransform(lt["mean"], lt["std"]),
        "step": tr["step"],
        "best_step": tr["best_step"],
        "best_test_mse": math.inf if tr["best_test_mse"] is None else tr["best_test_mse"],
        "curve": curve,
    }
    return state, TrainConfig(**tr["hyper"])
