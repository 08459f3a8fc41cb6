"""
gradcheck.py
------------
Central finite-difference verification of tape gradients (64-bit only).

grad_check(fn, x) returns the max relative error between the analytic gradient
and the central difference, over every input coordinate or a sampled subset.
"""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from autodiff.tape import GradTape, backward
from autodiff.tensor import Tensor
from utils.config import GRADCHECK_ATOL, GRADCHECK_INSTABILITY, GRADCHECK_STEP
from utils.errors import GradCheckError

Inputs = np.ndarray | Mapping[str, np.ndarray]


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    worst_input: str
    worst_index: int
    coordinates: int


def _evaluate(fn: Callable, arrays: dict[str, np.ndarray], single: bool) -> float:
    tensors = {k: Tensor(v) for k, v in arrays.items()}
    out = fn(tensors["x"]) if single else fn(tensors)
    if out.size != 1:
        raise GradCheckError(f"function must return a scalar, got shape {out.shape}")
    return out.item()


def _analytic(fn: Callable, arrays: dict[str, np.ndarray], single: bool) -> tuple[float, dict[str, np.ndarray]]:
    with GradTape() as tape:
        tensors = {k: tape.watch(Tensor(v)) for k, v in arrays.items()}
        out = fn(tensors["x"]) if single else fn(tensors)
    if out.size != 1:
        raise GradCheckError(f"function must return a scalar, got shape {out.shape}")
    if not tape.is_tracked(out):
        return out.item(), {k: np.zeros_like(v) for k, v in arrays.items()}
    grads = backward(tape, out)
    return out.item(), {k: np.array(grads[t]) for k, t in tensors.items()}


def _shifted(arrays: dict[str, np.ndarray], name: str, flat: int, delta: float) -> dict[str, np.ndarray]:
    moved = dict(arrays)
    copy = arrays[name].copy()
    copy.reshape(-1)[flat] += delta
    moved[name] = copy
    return moved


def grad_check_report(
    fn: Callable,
    x: Inputs,
    step: float = GRADCHECK_STEP,
    atol: float = GRADCHECK_ATOL,
    max_coords: int | None = None,
    seed: int = 0,
) -> GradCheckResult:
    """Full result of a finite-difference check, including the worst coordinate."""
    single = not isinstance(x, Mapping)
    arrays = {"x": np.array(x, dtype=np.float64)} if single else {
        k: np.array(v, dtype=np.float64) for k, v in x.items()
    }
    if step <= 0.0:
        raise GradCheckError(f"step must be positive, got {step}")

    f0, analytic = _analytic(fn, arrays, single)
    floor = atol * max(1.0, abs(f0))
    rng = np.random.default_rng(seed)

    worst = GradCheckResult(0.0, "", -1, 0)
    checked = 0
    for name in sorted(arrays):
        size = arrays[name].size
        coords = np.arange(size)
        if max_coords is not None and size > max_coords:
            coords = np.sort(rng.choice(size, size=max_coords, replace=False))
        for flat in coords:
            flat = int(flat)
            f_plus = _evaluate(fn, _shifted(arrays, name, flat, step), single)
            f_minus = _evaluate(fn, _shifted(arrays, name, flat, -step), single)
            central = (f_plus - f_minus) / (2.0 * step)
            forward_diff = (f_plus - f0) / step
            backward_diff = (f0 - f_minus) / step

            half = 0.5 * step
            central_half = (
                _evaluate(fn, _shifted(arrays, name, flat, half), single)
                - _evaluate(fn, _shifted(arrays, name, flat, -half), single)
            ) / step

            bound = GRADCHECK_INSTABILITY * max(1.0, abs(central))
            if abs(central - central_half) > bound or abs(forward_diff - backward_diff) > bound:
                raise GradCheckError(
                    f"{name}[{flat}]: not differentiable at the probe point "
                    f"(one-sided {forward_diff!r} vs {backward_diff!r}, halved step {central_half!r})"
                )

            a = float(analytic[name].reshape(-1)[flat])
            checked += 1
            diff = abs(a - central)
            if diff <= floor:
                continue
            rel = diff / max(abs(a), abs(central), 1e-12)
            if rel > worst.max_rel_error:
                worst = GradCheckResult(rel, name, flat, 0)
    return GradCheckResult(worst.max_rel_error, worst.worst_input, worst.worst_index, checked)


def grad_check(
    fn: Callable,
    x: Inputs,
    step: float = GRADCHECK_STEP,
    atol: float = GRADCHECK_ATOL,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max over coordinates of |analytic - central| / max(|analytic|, |central|, 1e-12).

    ``fn`` maps a Tensor (or a dict of Tensors when ``x`` is a mapping) to a
    scalar Tensor. Coordinates whose absolute disagreement is within the
    rounding floor ``atol * max(1, |fn(x)|)`` count as exact.
    """
    return grad_check_report(fn, x, step, atol, max_coords, seed).max_rel_error
