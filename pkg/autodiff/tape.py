"""
tape.py
-------
Explicit, step-scoped gradient tape.

    with GradTape() as tape:
        x = tape.watch(Tensor(...))
        loss = f(x)
    grads = backward(tape, loss)
    grads[x]

Operations record onto the tape that is active in the current context when at
least one of their inputs is tracked by it. A tape replays exactly once; a
second backward on the same tape is rejected.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence
from contextvars import ContextVar, Token
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from utils.errors import ShapeError, TapeError

if TYPE_CHECKING:
    from autodiff.tensor import Tensor

BackwardFn = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_ACTIVE: ContextVar[GradTape | None] = ContextVar("lhm_active_tape", default=None)


@dataclass(frozen=True)
class _Node:
    name: str
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward: BackwardFn


class GradTape:
    """Ordered record of executed operations, confined to one context."""

    def __init__(self) -> None:
        self._nodes: list[_Node] = []
        self._tracked: dict[int, Tensor] = {}
        self._token: Token | None = None
        self.consumed = False

    def __enter__(self) -> GradTape:
        if self.consumed:
            raise TapeError("tape already replayed; create a new tape per step")
        self._token = _ACTIVE.set(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        if self._token is not None:
            _ACTIVE.reset(self._token)
            self._token = None

    def watch(self, x: Tensor) -> Tensor:
        self._tracked[id(x)] = x
        return x

    def is_tracked(self, x: Tensor) -> bool:
        return self._tracked.get(id(x)) is x

    def record(self, name: str, output: Tensor, inputs: Sequence[Tensor], backward: BackwardFn) -> None:
        if self.consumed:
            raise TapeError(f"cannot record {name}: tape already replayed")
        self._nodes.append(_Node(name, output, tuple(inputs), backward))
        self._tracked[id(output)] = output

    def __len__(self) -> int:
        return len(self._nodes)


def active_tape() -> GradTape | None:
    return _ACTIVE.get()


class GradMap:
    """Gradients keyed by tensor identity."""

    def __init__(self, tape: GradTape, grads: dict[int, np.ndarray]) -> None:
        self._tape = tape
        self._grads = grads

    def __getitem__(self, x: Tensor) -> np.ndarray:
        if not self._tape.is_tracked(x):
            raise TapeError("variable not on tape")
        grad = self._grads.get(id(x))
        return np.zeros_like(x.data) if grad is None else grad

    def __contains__(self, x: Tensor) -> bool:
        return self._tape.is_tracked(x)


def backward(tape: GradTape, scalar_output: Tensor) -> GradMap:
    """Reverse replay of ``tape`` seeded with d(output)/d(output) = 1."""
    if tape.consumed:
        raise TapeError("backward already ran on this tape")
    if scalar_output.data.size != 1:
        raise TapeError(f"backward needs a scalar output, got shape {scalar_output.shape}")
    if not tape.is_tracked(scalar_output):
        raise TapeError("variable not on tape")

    grads: dict[int, np.ndarray] = {id(scalar_output): np.ones_like(scalar_output.data)}
    for node in reversed(tape._nodes):
        grad_out = grads.get(id(node.output))
        if grad_out is None:
            continue
        input_grads = node.backward(grad_out)
        for tensor, grad in zip(node.inputs, input_grads):
            if grad is None or not tape.is_tracked(tensor):
                continue
            if grad.shape != tensor.shape:
                raise ShapeError(f"{node.name}: gradient shape {grad.shape} != input shape {tensor.shape}")
            key = id(tensor)
            grads[key] = grads[key] + grad if key in grads else grad
    tape.consumed = True
    return GradMap(tape, grads)
