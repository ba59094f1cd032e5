"""Reverse-mode autodiff substrate: tensors, ops, batchnorm, Adam."""

from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    check_finite_enabled,
    grad_enabled,
    no_grad,
    set_check_finite,
    unbroadcast,
)
from . import ops
from .batchnorm import BatchNormState, batchnorm
from .optim import AdamConfig, ParameterStore, adam_step
from .gradcheck import (
    GradCheckResult,
    compare_gradients,
    gradcheck,
    gradcheck_params,
    numeric_gradient,
)

__all__ = [
    "AdamConfig",
    "BatchNormState",
    "GradCheckResult",
    "NonFiniteError",
    "ParameterStore",
    "ShapeError",
    "Tensor",
    "adam_step",
    "as_tensor",
    "batchnorm",
    "check_finite_enabled",
    "compare_gradients",
    "grad_enabled",
    "gradcheck",
    "gradcheck_params",
    "no_grad",
    "numeric_gradient",
    "ops",
    "set_check_finite",
    "unbroadcast",
]
