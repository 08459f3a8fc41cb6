"""
tensor.py
---------
Immutable n-dimensional array value flowing through the tape.

Data is float64 in row-major order; every constructor and every operation
rejects NaN/Inf.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from utils.errors import NonFiniteError


def check_finite(name: str, data: np.ndarray) -> None:
    if data.dtype.kind == "f" and not np.isfinite(data).all():
        bad = int(np.flatnonzero(~np.isfinite(data))[0])
        raise NonFiniteError(f"{name}: non-finite value at flat index {bad}")


class Tensor:
    __slots__ = ("data",)

    def __init__(self, data: Any, dtype: Any = np.float64) -> None:
        array = np.array(data, dtype=dtype)
        check_finite("tensor", array)
        array.flags.writeable = False
        self.data = array

    @classmethod
    def wrap(cls, data: np.ndarray) -> Tensor:
        """Adopt an already-checked array without copying."""
        out = cls.__new__(cls)
        data.flags.writeable = False
        out.data = data
        return out

    # ── Introspection ─────────────────────────────────────────────────────────

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    # ── Arithmetic ────────────────────────────────────────────────────────────

    def __add__(self, other: Any) -> Tensor:
        return ops.apply_binary("add", self, other)

    def __radd__(self, other: Any) -> Tensor:
        return ops.apply_binary("add", other, self)

    def __sub__(self, other: Any) -> Tensor:
        return ops.apply_binary("sub", self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return ops.apply_binary("sub", other, self)

    def __mul__(self, other: Any) -> Tensor:
        return ops.apply_binary("mul", self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return ops.apply_binary("mul", other, self)

    def __truediv__(self, other: Any) -> Tensor:
        return ops.apply_binary("div", self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        return ops.apply_binary("div", other, self)

    def __neg__(self) -> Tensor:
        return ops.apply_unary("negate", self)

    def __matmul__(self, other: Any) -> Tensor:
        return ops.matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        return ops.getitem(self, index)

    # ── Shorthands ────────────────────────────────────────────────────────────

    def sum(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return ops.reduce("sum", self, axis, keepdims=keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return ops.reduce("mean", self, axis, keepdims=keepdims)

    def max(self, axis: int | None = None, keepdims: bool = False) -> Tensor:
        return ops.reduce("max", self, axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return ops.reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        return ops.transpose(self, axes or None)

    @property
    def T(self) -> Tensor:
        return ops.transpose(self, None)


from autodiff import ops  # noqa: E402  (operator overloads dispatch through ops)
