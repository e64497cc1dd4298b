"""Minimal reverse-mode autodiff engine backing the models."""

from .functional import (
    SIGMOID_EPS,
    batch_norm,
    conv1d,
    conv2d,
    global_avg_pool,
    layer_norm,
    leaky_relu,
    linear,
    relu,
    sigmoid,
)
from .optim import adam_step
from .tensor import (
    ParamStore,
    Tensor,
    add,
    as_tensor,
    backward,
    clip,
    concat,
    exp,
    get_default_dtype,
    log,
    mean,
    precision,
    set_default_dtype,
    tensor,
)

__all__ = [
    "Tensor", "ParamStore", "tensor", "as_tensor", "backward", "precision",
    "get_default_dtype", "set_default_dtype", "add", "clip", "concat", "exp", "log", "mean",
    "conv1d", "conv2d", "linear", "relu", "leaky_relu", "sigmoid", "batch_norm",
    "layer_norm", "global_avg_pool", "adam_step", "SIGMOID_EPS",
]
