"""Shared numeric containers and probability transforms.

Matrices are class-major: row ``k`` is class ``k`` and column ``i`` is
sample ``i``. All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, ShapeError
from .validation import check_labels, check_matrix, check_positive


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64 if arr.dtype.kind == "f" else arr.dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """K x n matrix of class-by-sample logits."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(check_matrix(self.values)))

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def num_samples(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ProbabilityMatrix:
    """K x n matrix whose columns are probability vectors."""

    values: np.ndarray

    def __post_init__(self):
        arr = check_matrix(self.values, name="probabilities")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise DataError("probabilities must lie in [0, 1]")
        sums = arr.sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > 1e-9:
            raise DataError("every probability column must sum to 1 within 1e-9")
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]

    @property
    def num_samples(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class ClassMarginal:
    """Nonnegative weight vector summing to one (a label or sample marginal)."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if w.size == 0 or not np.all(np.isfinite(w)) or w.min() < 0.0:
            raise DataError("marginal weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise DataError(f"marginal weights must sum to 1, got {w.sum()!r}")
        object.__setattr__(self, "weights", _frozen(w))

    def __len__(self):
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class LabeledSplit:
    """Logits together with their true labels."""

    logits: SimilarityMatrix
    labels: np.ndarray

    def __post_init__(self):
        logits = self.logits if isinstance(self.logits, SimilarityMatrix) else SimilarityMatrix(self.logits)
        labels = check_labels(self.labels, logits.num_classes, logits.num_samples)
        labels = labels.copy()
        labels.setflags(write=False)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)

    @property
    def num_samples(self) -> int:
        return self.logits.num_samples

    @property
    def num_classes(self) -> int:
        return self.logits.num_classes

    def subset(self, indices) -> "LabeledSplit":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledSplit(self.logits.values[:, indices], self.labels[indices])


def softmax_columns(logits, temperature: float = 1.0) -> np.ndarray:
    """Column-wise softmax of ``logits / temperature``, max-subtracted for stability."""
    temperature = check_positive(temperature, "temperature")
    z = check_matrix(logits, min_rows=1) / temperature
    z = z - z.max(axis=0, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=0, keepdims=True)
    return z


def argmax_class(probs) -> np.ndarray:
    """Per-column argmax; ties go to the lowest class index."""
    arr = np.asarray(getattr(probs, "values", probs), dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a K x n matrix, got shape {arr.shape}")
    return np.argmax(arr, axis=0)
