"""Minimal float32 tensor library with reverse-mode autodiff and SGD."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .functional import (
    bilinear_upsample,
    conv2d,
    cross_entropy,
    embedding,
    gelu,
    layer_norm,
    max_pool2d,
    multi_head_attention,
    softmax,
)
from .optim import SGD, MissingGradient, SgdConfig, sgd_step
from .rng import Rng
from .tensor import (
    Tensor,
    add,
    clamp_min,
    concat,
    grad_enabled,
    log,
    matmul,
    mul,
    neg,
    no_grad,
    relu,
    reshape,
    set_debug_finite,
    slice_axis,
    tensor_mean,
    tensor_sum,
    transpose,
)

__all__ = [
    "CheckpointError",
    "MissingGradient",
    "Rng",
    "SGD",
    "SgdConfig",
    "Tensor",
    "add",
    "bilinear_upsample",
    "clamp_min",
    "concat",
    "conv2d",
    "cross_entropy",
    "embedding",
    "gelu",
    "grad_enabled",
    "layer_norm",
    "load_checkpoint",
    "log",
    "matmul",
    "max_pool2d",
    "mul",
    "multi_head_attention",
    "neg",
    "no_grad",
    "relu",
    "reshape",
    "save_checkpoint",
    "set_debug_finite",
    "sgd_step",
    "slice_axis",
    "softmax",
    "tensor_mean",
    "tensor_sum",
    "transpose",
]
