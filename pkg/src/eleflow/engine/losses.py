"""Loss functions returning (scalar loss, gradient w.r.t. predictions)."""

from __future__ import annotations

import numpy as np

from ..errors import DataError, DimensionError

BCE_CLAMP = 1e-7


def _check_shapes(pred: np.ndarray, target: np.ndarray):
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} != target shape {target.shape}")


def bce_loss(pred: np.ndarray, target: np.ndarray):
    """Mean binary cross-entropy; predictions clamped to [1e-7, 1-1e-7]."""
    _check_shapes(pred, target)
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))
    inside = (pred > BCE_CLAMP) & (pred < 1.0 - BCE_CLAMP)
    grad = np.where(inside, (p - target) / (p * (1.0 - p)), 0.0) / pred.size
    return loss, grad


def msle_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared logarithmic error over all elements."""
    _check_shapes(pred, target)
    if np.any(pred <= -1.0) or np.any(target <= -1.0):
        raise DataError("msle needs all values > -1 (log1p domain)")
    diff = np.log1p(pred) - np.log1p(target)
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / (1.0 + pred) / pred.size
    return loss, grad


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Plain mean squared error (alternative to msle)."""
    _check_shapes(pred, target)
    diff = pred - target
    loss = float(np.mean(diff * diff))
    grad = 2.0 * diff / pred.size
    return loss, grad


def per_row_msle(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Squared-log error averaged within each row of a 2-D batch."""
    _check_shapes(pred, target)
    if np.any(pred <= -1.0) or np.any(target <= -1.0):
        raise DataError("msle needs all values > -1 (log1p domain)")
    diff = np.log1p(pred) - np.log1p(target)
    return np.mean(diff * diff, axis=1)


def per_sample_msle(pred_row: np.ndarray, target_row: np.ndarray) -> float:
    """Squared-log error averaged over one sample's features."""
    pred_row = np.asarray(pred_row, dtype=np.float64)
    target_row = np.asarray(target_row, dtype=np.float64)
    return float(per_row_msle(pred_row.reshape(1, -1), target_row.reshape(1, -1))[0])
