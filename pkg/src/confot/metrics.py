"""Evaluation metrics: coverage, set size, class-conditional coverage violation, top-1."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import argmax_class
from .exceptions import DataError, ShapeError


@dataclass(frozen=True)
class MetricsReport:
    top1: float
    coverage: float
    avg_size: float
    ccv: float
    alpha: float
    n_test: int

    def as_dict(self):
        return asdict(self)


def _membership(sets, labels):
    """Return ``(covered, sizes)`` for sets given as PredictionSet objects or a K x n mask."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if isinstance(sets, np.ndarray) and sets.dtype == bool:
        if sets.ndim != 2 or sets.shape[1] != labels.shape[0]:
            raise ShapeError(f"mask shape {sets.shape} does not match {labels.shape[0]} labels")
        return sets[labels, np.arange(labels.shape[0])], sets.sum(axis=0)
    sets = list(sets)
    if len(sets) != labels.shape[0]:
        raise ShapeError(f"{len(sets)} sets but {labels.shape[0]} labels")
    covered = np.array([int(y) in s for s, y in zip(sets, labels)], dtype=bool)
    sizes = np.array([len(s) for s in sets], dtype=np.int64)
    return covered, sizes


def empirical_coverage(sets, labels) -> float:
    """Fraction of samples whose true label lies in its prediction set."""
    covered, _ = _membership(sets, labels)
    if covered.size == 0:
        raise DataError("coverage of an empty collection is undefined")
    return float(covered.mean())


def average_set_size(sets) -> float:
    if isinstance(sets, np.ndarray) and sets.dtype == bool:
        sizes = sets.sum(axis=0)
    else:
        sizes = np.array([len(s) for s in sets])
    if sizes.size == 0:
        raise DataError("average set size of an empty collection is undefined")
    return float(sizes.mean())


def ccv_from_covered(covered, labels, alpha, n_classes=None) -> float:
    """Mean absolute per-class coverage gap to ``1 - alpha``, in percentage points.

    Classes without any test sample are left out of the mean.
    """
    covered = np.asarray(covered, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1 if labels.size else 0
    counts = np.bincount(labels, minlength=n_classes)
    hits = np.bincount(labels, weights=covered, minlength=n_classes)
    present = counts > 0
    if not present.any():
        raise DataError("CCV needs at least one class with test samples")
    per_class = hits[present] / counts[present]
    return float(100.0 * np.mean(np.abs(per_class - (1.0 - alpha))))


def ccv(sets, labels, alpha, n_classes=None) -> float:
    covered, _ = _membership(sets, labels)
    return ccv_from_covered(covered, labels, alpha, n_classes)


def top1_accuracy(probs, labels) -> float:
    """Fraction of columns of a K x n matrix whose argmax equals the label."""
    labels = np.asarray(labels, dtype=np.int64)
    pred = argmax_class(probs)
    if pred.shape != labels.shape:
        raise ShapeError(f"{pred.shape[0]} predictions but {labels.shape[0]} labels")
    if labels.size == 0:
        raise DataError("accuracy of an empty collection is undefined")
    return float(np.mean(pred == labels))


def evaluate(sets, labels, probs, alpha, n_classes=None) -> MetricsReport:
    covered, sizes = _membership(sets, labels)
    if covered.size == 0:
        raise DataError("cannot evaluate an empty test split")
    return MetricsReport(
        top1=top1_accuracy(probs, labels),
        coverage=float(covered.mean()),
        avg_size=float(sizes.mean()),
        ccv=ccv_from_covered(covered, labels, alpha, n_classes),
        alpha=float(alpha),
        n_test=int(covered.size),
    )
