"""
ops.py
------
Differentiable primitives. Every function computes its result with numpy,
rejects non-finite output and, when an input is tracked by the active tape,
records a backward rule.

Elementwise rules are table-driven: ``UNARY_RULES[name] = (forward, derivative)``
where ``derivative(x, y)`` returns dy/dx given input ``x`` and output ``y``.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from autodiff.tape import BackwardFn, active_tape
from autodiff.tensor import Tensor, check_finite
from utils.config import LAYER_NORM_EPS
from utils.errors import DomainError, ShapeError

ArrayLike = Tensor | np.ndarray | float | int


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record(name: str, out: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Wrap ``out`` and register ``backward`` when any input is tracked."""
    out = np.asarray(out, dtype=np.float64)
    check_finite(name, out)
    result = Tensor.wrap(out)
    tape = active_tape()
    if tape is not None and any(tape.is_tracked(t) for t in inputs):
        tape.record(name, result, inputs, backward)
    return result


def stop_gradient(x: Tensor) -> Tensor:
    return Tensor.wrap(x.data)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ── Elementwise ───────────────────────────────────────────────────────────────

_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_K * (x + _GELU_A * x**3)))


def _gelu_grad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    th = np.tanh(_GELU_K * (x + _GELU_A * x**3))
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GELU_K * (1.0 + 3.0 * _GELU_A * x * x)


def _silu_grad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


UNARY_RULES: dict[str, tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray, np.ndarray], np.ndarray]]] = {
    "exp":      (np.exp, lambda x, y: y),
    "log":      (np.log, lambda x, y: 1.0 / x),
    "sqrt":     (np.sqrt, lambda x, y: 0.5 / y),
    "sigmoid":  (_sigmoid, lambda x, y: y * (1.0 - y)),
    "softplus": (lambda x: np.logaddexp(0.0, x), lambda x, y: _sigmoid(x)),
    "gelu":     (_gelu, _gelu_grad),
    "negate":   (np.negative, lambda x, y: np.full_like(x, -1.0)),
    "tanh":     (np.tanh, lambda x, y: 1.0 - y * y),
    "relu":     (lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0.0).astype(np.float64)),
    "silu":     (lambda x: x * _sigmoid(x), _silu_grad),
    "abs":      (np.abs, lambda x, y: np.sign(x)),
    "square":   (np.square, lambda x, y: 2.0 * x),
}

_POSITIVE_DOMAIN = {"log", "sqrt"}


def apply_unary(op_code: str, x: ArrayLike) -> Tensor:
    if op_code not in UNARY_RULES:
        raise ShapeError(f"unknown unary op {op_code!r}")
    x = as_tensor(x)
    if op_code in _POSITIVE_DOMAIN and x.size and not (x.data > 0.0).all():
        bad = int(np.flatnonzero(~(x.data > 0.0))[0])
        raise DomainError(f"{op_code} requires positive input, got {x.data.reshape(-1)[bad]!r}", bad)
    forward, derivative = UNARY_RULES[op_code]
    y = forward(x.data)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g * derivative(x.data, y),)

    return record(op_code, y, (x,), _backward)


def exp(x: ArrayLike) -> Tensor:
    return apply_unary("exp", x)


def log(x: ArrayLike) -> Tensor:
    return apply_unary("log", x)


def sqrt(x: ArrayLike) -> Tensor:
    return apply_unary("sqrt", x)


def sigmoid(x: ArrayLike) -> Tensor:
    return apply_unary("sigmoid", x)


def softplus(x: ArrayLike) -> Tensor:
    return apply_unary("softplus", x)


def gelu(x: ArrayLike) -> Tensor:
    return apply_unary("gelu", x)


def tanh(x: ArrayLike) -> Tensor:
    return apply_unary("tanh", x)


def relu(x: ArrayLike) -> Tensor:
    return apply_unary("relu", x)


def silu(x: ArrayLike) -> Tensor:
    return apply_unary("silu", x)


def absolute(x: ArrayLike) -> Tensor:
    return apply_unary("abs", x)


def square(x: ArrayLike) -> Tensor:
    return apply_unary("square", x)


BINARY_CODES = ("add", "sub", "mul", "div")


def apply_binary(op_code: str, a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op_code}: incompatible shapes {a.shape} and {b.shape}") from exc

    if op_code == "add":
        out = a.data + b.data

        def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    elif op_code == "sub":
        out = a.data - b.data

        def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    elif op_code == "mul":
        out = a.data * b.data

        def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    elif op_code == "div":
        if b.size and (b.data == 0.0).any():
            raise DomainError("division by zero", int(np.flatnonzero(b.data == 0.0)[0]))
        out = a.data / b.data

        def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            return (
                _unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
            )

    else:
        raise ShapeError(f"unknown binary op {op_code!r}")
    return record(op_code, out, (a, b), _backward)


# ── Linear algebra ────────────────────────────────────────────────────────────


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product, batched over leading extents."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul batch extents differ: {a.shape} @ {b.shape}") from exc

    def _backward(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return record("matmul", out, (a, b), _backward)


def linear(x: ArrayLike, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    out = matmul(x, weight)
    return out if bias is None else out + bias


def softmax(x: ArrayLike, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return record("softmax", y, (x,), _backward)


def layer_norm(
    x: ArrayLike,
    gain: Tensor | None = None,
    bias: Tensor | None = None,
    eps: float = LAYER_NORM_EPS,
) -> Tensor:
    """Row normalization over the last extent, optional affine applied last."""
    x = as_tensor(x)
    width = x.shape[-1]
    for name, param in (("gain", gain), ("bias", bias)):
        if param is not None and param.shape != (width,):
            raise ShapeError(f"layer_norm {name} {param.shape} does not match width {width}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat
    if gain is not None:
        out = out * gain.data
    if bias is not None:
        out = out + bias.data

    inputs: list[Tensor] = [x]
    if gain is not None:
        inputs.append(gain)
    if bias is not None:
        inputs.append(bias)

    def _backward(g: np.ndarray) -> list[np.ndarray]:
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gain.data if gain is not None else g
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        grads = [dx]
        if gain is not None:
            grads.append((g * xhat).sum(axis=lead))
        if bias is not None:
            grads.append(g.sum(axis=lead))
        return grads

    return record("layer_norm", out, inputs, _backward)


# ── Reductions ────────────────────────────────────────────────────────────────

REDUCE_CODES = ("sum", "mean", "max")


def reduce(op_code: str, x: ArrayLike, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is not None:
        if not -x.ndim <= axis < x.ndim:
            raise ShapeError(f"reduce axis {axis} invalid for shape {x.shape}")
        axis = axis % x.ndim
        if x.shape[axis] == 0:
            raise ShapeError(f"{op_code}: empty reduction axis {axis}")
    elif x.size == 0:
        raise ShapeError(f"{op_code}: empty reduction")

    if op_code == "sum":
        out = x.data.sum(axis=axis, keepdims=keepdims)

        def _backward(g: np.ndarray) -> tuple[np.ndarray]:
            g = g if keepdims or axis is None else np.expand_dims(g, axis)
            return (np.broadcast_to(g, x.shape).copy(),)

    elif op_code == "mean":
        count = x.size if axis is None else x.shape[axis]
        out = x.data.mean(axis=axis, keepdims=keepdims)

        def _backward(g: np.ndarray) -> tuple[np.ndarray]:
            g = g if keepdims or axis is None else np.expand_dims(g, axis)
            return (np.broadcast_to(g / count, x.shape).copy(),)

    elif op_code == "max":
        # np.argmax returns the first occurrence: ties route to the lowest index
        if axis is None:
            flat = int(np.argmax(x.data))
            out = x.data.reshape(-1)[flat]
            out = np.reshape(out, (1,) * x.ndim) if keepdims else np.asarray(out)

            def _backward(g: np.ndarray) -> tuple[np.ndarray]:
                grad = np.zeros(x.size)
                grad[flat] = float(np.reshape(g, -1)[0])
                return (grad.reshape(x.shape),)

        else:
            arg = np.expand_dims(np.argmax(x.data, axis=axis), axis)
            kept = np.take_along_axis(x.data, arg, axis=axis)
            out = kept if keepdims else np.squeeze(kept, axis=axis)

            def _backward(g: np.ndarray) -> tuple[np.ndarray]:
                g = g if keepdims else np.expand_dims(g, axis)
                grad = np.zeros(x.shape)
                np.put_along_axis(grad, arg, g, axis=axis)
                return (grad,)

    else:
        raise ShapeError(f"unknown reduction {op_code!r}")
    return record(op_code, out, (x,), _backward)


# ── Structure ─────────────────────────────────────────────────────────────────


def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (g.reshape(x.shape),)

    return record("reshape", out, (x,), _backward)


def transpose(x: ArrayLike, axes: Sequence[int] | None = None) -> Tensor:
    x = as_tensor(x)
    perm = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    out = np.transpose(x.data, perm)
    inverse = tuple(np.argsort(perm))

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.transpose(g, inverse),)

    return record("transpose", out, (x,), _backward)


def concat(xs: Sequence[ArrayLike], axis: int = 0) -> Tensor:
    tensors = [as_tensor(x) for x in xs]
    if not tensors:
        raise ShapeError("concat of an empty list")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from exc
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def _backward(g: np.ndarray) -> list[np.ndarray]:
        return [
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(tensors))
        ]

    return record("concat", out, tensors, _backward)


def take(x: ArrayLike, indices: np.ndarray, axis: int = 0) -> Tensor:
    """Gather along ``axis``; repeated indices accumulate in backward."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[axis]):
        raise ShapeError(f"take: index out of range for extent {x.shape[axis]}")
    out = np.take(x.data, idx, axis=axis)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(x.shape)
        moved = np.moveaxis(grad, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return (grad,)

    return record("take", out, (x,), _backward)


def getitem(x: ArrayLike, index: Any) -> Tensor:
    """Basic (slice/integer) indexing."""
    x = as_tensor(x)
    out = x.data[index]

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(x.shape)
        grad[index] += g
        return (grad,)

    return record("getitem", np.array(out), (x,), _backward)


def split_rows(x: Tensor, counts: Sequence[int]) -> list[Tensor]:
    if sum(counts) != x.shape[0]:
        raise ShapeError(f"split counts {list(counts)} do not cover {x.shape[0]} rows")
    bounds = np.cumsum([0, *counts])
    return [x[int(bounds[i]) : int(bounds[i + 1])] for i in range(len(counts))]


# ── Geometry helpers ──────────────────────────────────────────────────────────


def row_norm(x: ArrayLike) -> Tensor:
    """Euclidean norm of each row; the gradient at a zero row is zero."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=-1))

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        safe = np.where(norm > 0.0, norm, 1.0)
        unit = np.where((norm > 0.0)[..., None], x.data / safe[..., None], 0.0)
        return (g[..., None] * unit,)

    return record("row_norm", norm, (x,), _backward)


def normalize_rows(x: ArrayLike, fallback: np.ndarray | None = None) -> Tensor:
    """Unit-normalize rows; all-zero rows become ``fallback`` with no gradient."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=-1, keepdims=True))
    zero = norm[..., 0] == 0.0
    safe = np.where(norm > 0.0, norm, 1.0)
    out = x.data / safe
    if zero.any():
        if fallback is None:
            raise DomainError("cannot normalize an all-zero row", int(np.flatnonzero(zero)[0]))
        out[zero] = fallback

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        radial = (g * out).sum(axis=-1, keepdims=True)
        grad = (g - out * radial) / safe
        grad[zero] = 0.0
        return (grad,)

    return record("normalize_rows", out, (x,), _backward)


# ── Image helpers ─────────────────────────────────────────────────────────────


def im2col(x: ArrayLike, kernel: int) -> Tensor:
    """(H, W, C) -> (H*W, kernel*kernel*C) patches with zero 'same' padding."""
    x = as_tensor(x)
    if x.ndim != 3 or kernel % 2 != 1:
        raise ShapeError(f"im2col needs (H, W, C) input and odd kernel, got {x.shape}, {kernel}")
    h, w, c = x.shape
    pad = kernel // 2
    padded = np.pad(x.data, ((pad, pad), (pad, pad), (0, 0)))
    windows = sliding_window_view(padded, (kernel, kernel), axis=(0, 1))  # (H, W, C, k, k)
    out = np.transpose(windows, (0, 1, 3, 4, 2)).reshape(h * w, kernel * kernel * c)

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        blocks = g.reshape(h, w, kernel, kernel, c)
        grad = np.zeros((h + 2 * pad, w + 2 * pad, c))
        for di in range(kernel):
            for dj in range(kernel):
                grad[di : di + h, dj : dj + w] += blocks[:, :, di, dj]
        return (grad[pad : pad + h, pad : pad + w],)

    return record("im2col", out, (x,), _backward)


def avg_pool2(x: ArrayLike) -> Tensor:
    """2x2 average pooling of an (H, W, C) map; odd trailing rows/cols are cropped."""
    x = as_tensor(x)
    h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    if h2 == 0 or w2 == 0:
        raise ShapeError(f"avg_pool2: map {x.shape} too small")
    cropped = x.data[: 2 * h2, : 2 * w2]
    out = cropped.reshape(h2, 2, w2, 2, c).mean(axis=(1, 3))

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        grad = np.zeros(x.shape)
        spread = np.repeat(np.repeat(g / 4.0, 2, axis=0), 2, axis=1)
        grad[: 2 * h2, : 2 * w2] = spread
        return (grad,)

    return record("avg_pool2", out, (x,), _backward)
