"""Minimal dense-tensor library with reverse-mode differentiation.

Everything runs in float64 on plain numpy arrays; forward passes are
bit-reproducible for fixed inputs. Only the operations needed by the
encoder and the mask-based feature extractor are provided.
"""

from .tensor import (
    Tensor,
    add,
    attention,
    concat,
    conv2d,
    cross_entropy,
    gelu,
    log_softmax,
    mask_pool_op,
    matmul,
    mean_all,
    mul,
    reshape,
    row_select,
    scale_shift_channels,
    softmax,
    softplus,
    spatial_mean,
    sub,
    sum_all,
    transpose2d,
)
from .gradcheck import grad_check
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor",
    "add",
    "attention",
    "concat",
    "conv2d",
    "cross_entropy",
    "gelu",
    "grad_check",
    "load_checkpoint",
    "log_softmax",
    "mask_pool_op",
    "matmul",
    "mean_all",
    "mul",
    "reshape",
    "row_select",
    "save_checkpoint",
    "scale_shift_channels",
    "softmax",
    "softplus",
    "spatial_mean",
    "sub",
    "sum_all",
    "transpose2d",
]
