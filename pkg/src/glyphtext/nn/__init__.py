"""Minimal reverse-mode autodiff core over float32 numpy arrays."""

from .gradcheck import finite_diff_check
from .optim import Adam, AdamState
from .ops import (
    adaptive_maxpool1d,
    add,
    affine,
    batch_norm,
    concat_last,
    conv1d,
    conv2d,
    dropout,
    gather_rows,
    gru_cell,
    linear,
    masked_mean_time,
    matmul,
    maxpool1d,
    maxpool2d,
    mul,
    narrow,
    relu,
    reshape,
    select_time,
    sigmoid,
    softmax,
    softmax_ce_with_grad,
    softmax_cross_entropy,
    stack_time,
    swap_axes,
    tanh,
    tsum,
)
from .tensor import Tensor, as_tensor

__all__ = [
    "Tensor",
    "as_tensor",
    "Adam",
    "AdamState",
    "finite_diff_check",
    "add",
    "mul",
    "affine",
    "matmul",
    "relu",
    "sigmoid",
    "tanh",
    "reshape",
    "swap_axes",
    "narrow",
    "concat_last",
    "select_time",
    "stack_time",
    "masked_mean_time",
    "gather_rows",
    "tsum",
    "linear",
    "conv2d",
    "conv1d",
    "maxpool2d",
    "maxpool1d",
    "adaptive_maxpool1d",
    "batch_norm",
    "dropout",
    "softmax",
    "softmax_ce_with_grad",
    "softmax_cross_entropy",
    "gru_cell",
]
