"""A small reverse-mode autodiff engine on 2-D numpy arrays."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .optim import Adam, AdamState, adam_step, glorot_uniform, zeros
from .tensor import (
    ShapeError,
    Tensor,
    add,
    apply_linear,
    as_tensor,
    backward,
    build_tape,
    clamp_min,
    concat_cols,
    concat_rows,
    div,
    exp,
    gather_rows,
    grad_check,
    log,
    log_sigmoid,
    matmul,
    mean,
    mul,
    record_kinks,
    relu,
    reshape,
    row_log_softmax,
    row_softmax,
    scale,
    sigmoid,
    sub,
    sum,
    sum_rows,
    take,
    transpose,
)

__all__ = [
    "Adam", "AdamState", "CheckpointError", "ShapeError", "Tensor", "adam_step", "add", "apply_linear", "as_tensor",
    "backward", "build_tape", "clamp_min", "concat_cols", "concat_rows", "div", "exp", "gather_rows",
    "glorot_uniform", "grad_check", "load_checkpoint", "log", "log_sigmoid", "matmul", "mean", "mul",
    "record_kinks", "relu", "reshape", "row_log_softmax", "row_softmax", "save_checkpoint", "scale",
    "sigmoid", "sub", "sum", "sum_rows", "take", "transpose", "zeros",
]
