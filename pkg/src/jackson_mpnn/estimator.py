"""scikit-learn style wrapper around the MPNN delay model."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import queueing
from .dataset import Sample
from .metrics import predict_samples, r2
from .model import GraphBatch, ModelConfig
from .training import TrainConfig, load_model, save_model, train
from .validation import check_labels, check_networks, labels_from


def _samples(X, y, name="X"):
    nets = check_networks(X, name)
    if y is None:
        y = labels_from(X)
    if y is None:
        # unlabelled networks: the analytic delay is the target
        y = [queueing.solve(net).average_delay for net in nets]
    y = check_labels(y, len(nets), "y" if name == "X" else f"{name} labels")
    return [Sample(net, w) for net, w in zip(nets, y)]


class MPNNRegressor(RegressorMixin, BaseEstimator):
    """Predicts the mean end-to-end delay ``W`` of a Jackson network.

    ``fit`` takes a sequence of :class:`QueueNetwork` (or labelled samples)
    and optional delays ``y``; when neither carries labels the analytic delay
    is used. ``predict`` returns delays in the original time units and
    ``transform`` returns the normalized graph embedding (one row per
    network). ``eval_set`` is the held-out set used to pick the best
    checkpoint during training.
    """

    def __init__(
        self,
        hidden_dim=16,
        message_steps=8,
        readout="attention",
        aggregate="incoming",
        max_steps=8000,
        batch_size=32,
        learning_rate=1e-3,
        eval_interval=100,
        calibration_size=512,
        random_state=0,
    ):
        self.hidden_dim = hidden_dim
        self.message_steps = message_steps
        self.readout = readout
        self.aggregate = aggregate
        self.max_steps = max_steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.eval_interval = eval_interval
        self.calibration_size = calibration_size
        self.random_state = random_state

    def _configs(self):
        cfg = ModelConfig(
            hidden_dim=self.hidden_dim,
            steps=self.message_steps,
            readout=self.readout,
            aggregate=self.aggregate,
        )
        hyper = TrainConfig(
            steps=self.max_steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            eval_interval=self.eval_interval,
            calibration_size=self.calibration_size,
            seed=int(self.random_state or 0),
        )
        return cfg, hyper

    def fit(self, X, y=None, eval_set=None):
        cfg, hyper = self._configs()
        train_set = _samples(X, y)
        test_set = None
        if eval_set is not None:
            X_test, y_test = eval_set if isinstance(eval_set, tuple) else (eval_set, None)
            test_set = _samples(X_test, y_test, "eval_set")
        result = train(train_set, test_set, cfg, hyper)
        self.model_ = result.model
        self.transform_ = result.transform
        self.curve_ = result.curve
        self.best_step_ = result.best_step
        self.n_steps_ = result.steps_done
        return self

    def _predict_std(self, X):
        check_is_fitted(self, "model_")
        nets = check_networks(X)
        return predict_samples(self.model_, [Sample(n, 1.0) for n in nets])

    def predict(self, X) -> np.ndarray:
        y = self._predict_std(X)
        return self.transform_.invert(y)

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        nets = check_networks(X)
        return np.concatenate([self.model_.embed(GraphBatch(nets[lo : lo + 256])) for lo in range(0, len(nets), 256)])

    def score(self, X, y=None, sample_weight=None) -> float:
        """R² in original units."""
        y = check_labels(y if y is not None else [s.W for s in _samples(X, None)], len(check_networks(X)))
        if sample_weight is not None:
            return super().score(check_networks(X), y, sample_weight)
        return r2(y, self.predict(X))

    def save(self, path):
        check_is_fitted(self, "model_")
        save_model(path, self.model_, self.transform_, {"estimator": self.get_params(), "best_step": self.best_step_})

    @classmethod
    def load(cls, path) -> "MPNNRegressor":
        model, transform, header = load_model(path)
        params = dict(header.get("estimator", {}))
        params.update(
            hidden_dim=model.cfg.hidden_dim,
            message_steps=model.cfg.steps,
            readout=model.cfg.readout,
            aggregate=model.cfg.aggregate,
        )
        est = cls(**params)
        est.model_ = model
        est.transform_ = transform
        est.best_step_ = header.get("best_step", 0)
        return est
