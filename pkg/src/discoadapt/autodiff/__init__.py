"""Reverse-mode automatic differentiation over dense float64 arrays."""

from . import ops
from .gradcheck import check_gradients, numeric_gradient, relative_error
from .optim import SGD, Adam, OptimState
from .tensor import (
    DTYPE,
    NumericError,
    ShapeError,
    Tape,
    Tensor,
    active_tape,
    as_tensor,
    no_tape,
    parameter,
)

__all__ = [
    "DTYPE",
    "Adam",
    "NumericError",
    "OptimState",
    "SGD",
    "ShapeError",
    "Tape",
    "Tensor",
    "active_tape",
    "as_tensor",
    "check_gradients",
    "no_tape",
    "numeric_gradient",
    "ops",
    "parameter",
    "relative_error",
]
