"""Minimal differentiable building blocks (float64, CPU)."""
from .autodiff import SELU_ALPHA, SELU_SCALE, Tensor, backward, count_ops, param, selu, selu_array
from .gradcheck import GradCheckReport, gradient_check
from .layers import GRU_NAMES, BatchNormState, batch_norm, dense_forward, gru_step, mlp
from .params import ParamSpec, ParamStore, adam_step, init_params

__all__ = [
    "SELU_ALPHA",
    "SELU_SCALE",
    "BatchNormState",
    "GRU_NAMES",
    "GradCheckReport",
    "ParamSpec",
    "ParamStore",
    "Tensor",
    "adam_step",
    "backward",
    "batch_norm",
    "count_ops",
    "dense_forward",
    "gradient_check",
    "gru_step",
    "init_params",
    "mlp",
    "param",
    "selu",
    "selu_array",
]
