"""Reverse-mode automatic differentiation on float64 numpy arrays."""

from autodiff.tensor import Tensor, check_finite
from autodiff import ops
from autodiff.tape import GradMap, GradTape, active_tape, backward
from autodiff.gradcheck import GradCheckResult, grad_check, grad_check_report

__all__ = [
    "GradCheckResult",
    "GradMap",
    "GradTape",
    "Tensor",
    "active_tape",
    "backward",
    "check_finite",
    "grad_check",
    "grad_check_report",
    "ops",
]
