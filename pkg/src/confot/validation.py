"""Input validation helpers.

Everything numeric is coerced to float64 here so downstream routines can
assume finite, correctly shaped arrays.
"""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import DataError, ParameterError, ShapeError


def check_matrix(values, name="logits", min_rows=2, min_cols=1) -> np.ndarray:
    """Return ``values`` as a finite 2-D float64 array (class-major K x n)."""
    arr = np.asarray(getattr(values, "values", values), dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if arr.shape[0] < min_rows:
        raise ShapeError(f"{name} needs at least {min_rows} classes, got {arr.shape[0]}")
    if arr.shape[1] < min_cols:
        raise ShapeError(f"{name} needs at least {min_cols} samples, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise DataError(f"{name} contains a non-finite value at {tuple(int(i) for i in bad)}")
    return arr


def check_labels(labels, n_classes, n_samples=None, name="labels") -> np.ndarray:
    """Return ``labels`` as an int64 vector of class indices in ``[0, n_classes)``."""
    arr = np.asarray(labels)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        as_int = arr.astype(np.int64)
        if not np.array_equal(as_int, arr):
            raise DataError(f"{name} must contain integer class indices")
        arr = as_int
    arr = arr.astype(np.int64, copy=False)
    if n_samples is not None and arr.shape[0] != n_samples:
        raise ShapeError(f"{name} has length {arr.shape[0]}, expected {n_samples}")
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise DataError(f"{name} must lie in [0, {n_classes}), got range [{arr.min()}, {arr.max()}]")
    return arr


def check_alpha(alpha) -> float:
    if not isinstance(alpha, numbers.Real) or not 0.0 < float(alpha) < 1.0:
        raise ParameterError(f"alpha must lie strictly inside (0, 1), got {alpha!r}")
    return float(alpha)


def check_positive(value, name) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ParameterError(f"{name} must be a positive real, got {value!r}")
    return float(value)


def check_positive_int(value, name) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        raise ParameterError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_tie_breaker(u, n_samples) -> np.ndarray:
    arr = np.asarray(u, dtype=np.float64).reshape(-1)
    if arr.shape[0] != n_samples:
        raise ShapeError(f"tie-breaker has length {arr.shape[0]}, expected {n_samples}")
    if arr.size and (not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0):
        raise ParameterError("tie-breaker values must lie in [0, 1]")
    return arr
