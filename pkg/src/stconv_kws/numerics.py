"""Dense-array kernels underlying every layer.

Tensors are plain ``numpy.ndarray`` values in float64; training and all
gradient verification run in 64-bit, weights are only narrowed to 32-bit
when serialized.  Arrays are kept C-contiguous (row-major) so the weight
file format is unambiguous.
"""

import numpy as np

__all__ = [
    "ShapeMismatchError",
    "NumericError",
    "as_tensor",
    "matmul",
    "add",
    "mul",
    "relu",
    "sigmoid",
    "tanh",
    "softmax",
]


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(ValueError):
    """Non-finite values where finite input is required."""


def as_tensor(x) -> np.ndarray:
    """Coerce to a C-contiguous float64 array."""
    return np.ascontiguousarray(x, dtype=np.float64)


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product c[i, j] = sum_t a[i, t] * b[t, j]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatchError(
            f"matmul expects 2-D operands, got {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"matmul inner dimensions disagree: {a.shape} vs {b.shape}"
        )
    return a @ b


def _binary(a: np.ndarray, b: np.ndarray, op):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"operand shapes differ: {a.shape} vs {b.shape}")
    return op(a, b)


def add(a, b):
    """Elementwise sum of equal-shaped tensors."""
    return _binary(a, b, np.add)


def mul(a, b):
    """Elementwise (Hadamard) product of equal-shaped tensors."""
    return _binary(a, b, np.multiply)


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so neither branch exponentiates a large positive value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Stable softmax: exponentials are taken after subtracting the max."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NumericError("softmax input contains non-finite values")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)
