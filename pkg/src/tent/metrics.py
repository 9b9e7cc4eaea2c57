"""Forecast error metrics (computed in physical units by callers)."""

from __future__ import annotations

import numpy as np

from .tensor import DimensionError


def _pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise DimensionError(f"lengths differ: {pred.size} vs {target.size}")
    if pred.size == 0:
        raise DimensionError("metrics need at least one sample")
    return pred, target


def mae(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.abs(target - pred).sum() / pred.size)


def mse(pred, target) -> float:
    pred, target = _pair(pred, target)
    r = target - pred
    return float((r * r).sum() / pred.size)


def persistence_forecast(X: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Naive forecast: the last observed value of the target in each window."""
    c, f = target
    return np.asarray(X)[:, -1, c, f]
