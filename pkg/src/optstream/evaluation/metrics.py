from __future__ import annotations

import numpy as np

from ..core import InvalidParameterError, TimeSeries


def _arr(s) -> np.ndarray:
    return np.asarray(s.values if isinstance(s, TimeSeries) else s, dtype=float)


def avg_l1_error(x_hat, x) -> float:
    """Mean absolute difference between two equal-length series."""
    a, b = _arr(x_hat), _arr(x)
    if a.shape != b.shape:
        raise InvalidParameterError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise InvalidParameterError("cannot compare empty series")
    return float(np.mean(np.abs(a - b)))


def mse(x_hat, x) -> float:
    a, b = _arr(x_hat), _arr(x)
    if a.shape != b.shape:
        raise InvalidParameterError(f"length mismatch: {a.size} vs {b.size}")
    return float(np.mean((a - b) ** 2))
