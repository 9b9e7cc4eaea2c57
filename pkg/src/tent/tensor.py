"""Dense float64 tensor kernel.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C order.  The
functions here add the shape checks and error messages the rest of the
package relies on; arithmetic is delegated to numpy.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(x, *, check_finite: bool = True) -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 array."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if check_finite and not np.all(np.isfinite(arr)):
        raise ValueError("tensor contains non-finite values")
    return arr


def matmul(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


def softmax(v, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis`` (max-subtracted)."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 0 or v.shape[axis] == 0:
        raise DimensionError(f"softmax needs a non-empty axis, got shape {v.shape}")
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def sum_axis(t, axis: int) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    if not -t.ndim <= axis < t.ndim:
        raise DimensionError(f"axis {axis} out of range for rank {t.ndim}")
    return t.sum(axis=axis)


def hadamard_broadcast(s, v) -> np.ndarray:
    """Element-wise ``s * v`` where ``s`` is replicated along v's trailing axes.

    ``s.shape`` must be a prefix of ``v.shape``; a scalar broadcasts anywhere.
    """
    s = np.asarray(s, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if s.shape != v.shape[: s.ndim]:
        raise DimensionError(f"shape {s.shape} is not a prefix of {v.shape}")
    return s.reshape(s.shape + (1,) * (v.ndim - s.ndim)) * v


def concat_last(parts: Sequence) -> np.ndarray:
    if len(parts) == 0:
        raise DimensionError("concat_last needs at least one part")
    parts = [np.asarray(p, dtype=np.float64) for p in parts]
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise DimensionError(
                f"leading extents differ: {parts[0].shape} vs {p.shape}"
            )
    return np.concatenate(parts, axis=-1)
