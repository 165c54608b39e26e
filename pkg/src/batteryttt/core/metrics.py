"""
SOH error metrics in percentage points.
"""

from typing import Sequence

import numpy as np

from ..exceptions import ContractError


def _pair(y_true: Sequence[float], y_pred: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y_true, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.shape != b.shape or a.size == 0:
        raise ContractError(f"metric inputs must be non-empty and aligned: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ContractError("metric inputs contain NaN or infinite values")
    return a, b


def mae(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    a, b = _pair(y_true, y_pred)
    return float(np.mean(np.abs(a - b)))


def rmse(y_true: Sequence[float], y_pred: Sequence[float]) -> float:
    a, b = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((a - b) ** 2)))
