"""Learning the mean delay of Jackson queueing networks with a message-passing network.

The package bundles an exact solver for open Jackson networks, random and
SNDlib-based network generators, a discrete-event simulator for cross-checks,
a small numpy autodiff engine, the MPNN model with its training loop and
evaluation metrics, and a scikit-learn style estimator.
"""
from .dataset import LabelTransform, Sample, fit_label_transform, read_dataset, write_dataset
from .estimator import MPNNRegressor
from .metrics import EvalReport, evaluate, table_report
from .model import MPNN, GraphBatch, ModelConfig
from .queueing import QueueNetwork, TrafficSolution, solve, solve_intensities, solve_intensities_fixed_point
from .simulation import SimResult, simulate
from .sndlib import parse_sndlib, read_sndlib, sndlib_eval_set
from .topology import GenConfig, Topology, generate_dataset, generate_sample
from .training import TrainConfig, TrainingCurve, train

__version__ = "0.1.0"

__all__ = [
    "EvalReport",
    "GenConfig",
    "GraphBatch",
    "LabelTransform",
    "MPNN",
    "MPNNRegressor",
    "ModelConfig",
    "QueueNetwork",
    "Sample",
    "SimResult",
    "Topology",
    "TrafficSolution",
    "TrainConfig",
    "TrainingCurve",
    "evaluate",
    "fit_label_transform",
    "generate_dataset",
    "generate_sample",
    "parse_sndlib",
    "read_dataset",
    "read_sndlib",
    "simulate",
    "sndlib_eval_set",
    "solve",
    "solve_intensities",
    "solve_intensities_fixed_point",
    "table_report",
    "train",
    "write_dataset",
]
