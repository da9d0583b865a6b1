"""Minimal dense-tensor reverse-mode autodiff used by the models."""

from .engine import (
    Tape,
    Value,
    backward,
    check_finite,
    constant,
    current_tape,
    finite_checks_enabled,
    parameter,
    set_finite_checks,
)
from .gradcheck import finite_difference_check
from .optim import AdamState, adam_step
from .checkpoint import (
    clone_params,
    load_params,
    params_from_dict,
    params_to_dict,
    save_params,
)
from .ops import (
    add,
    concat_last_axis,
    conv1d,
    cross_entropy,
    dropout,
    gather_rows,
    masked_softmax,
    matmul,
    max_pool_over_positions,
    mean_pool_over_positions,
    mul,
    reduce_sum,
    relu,
    reshape,
    scale,
    select_positions,
    sigmoid,
    slice_last_axis,
    spmm,
    stack_positions,
    tanh,
)

__all__ = [
    "Tape", "Value", "backward", "check_finite", "constant", "current_tape",
    "finite_checks_enabled", "parameter", "set_finite_checks",
    "finite_difference_check", "AdamState", "adam_step",
    "clone_params", "load_params", "params_from_dict", "params_to_dict",
    "save_params",
    "add", "concat_last_axis", "conv1d", "cross_entropy", "dropout",
    "gather_rows", "masked_softmax", "matmul", "max_pool_over_positions",
    "mean_pool_over_positions", "mul", "reduce_sum", "relu", "reshape",
    "scale", "select_positions", "sigmoid", "slice_last_axis", "spmm",
    "stack_positions", "tanh",
]
