"""Split conformal calibration and prediction-set construction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .core import argmax_class, softmax_columns
from .exceptions import ContractError, DataError, ShapeError
from .scores import ScoreKind, as_score_kind, score_matrix, score_true_labels, tie_breaker
from .validation import (check_alpha, check_labels, check_matrix, check_positive,
                         check_tie_breaker)


@dataclass(frozen=True)
class ConformalThreshold:
    """Calibrated score quantile. ``s_hat`` is ``inf`` when too few calibration points exist."""

    s_hat: float
    alpha: float
    kind: ScoreKind
    n_calibration: int

    def __post_init__(self):
        check_alpha(self.alpha)
        if math.isnan(self.s_hat) or (math.isinf(self.s_hat) and self.s_hat < 0):
            raise DataError(f"invalid threshold {self.s_hat!r}")


@dataclass(frozen=True)
class PredictionSet:
    """Sorted tuple of admitted class indices; may be empty."""

    members: tuple

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(sorted({int(m) for m in self.members})))

    def __contains__(self, label):
        return int(label) in self.members

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @classmethod
    def from_mask(cls, mask):
        return cls(tuple(np.flatnonzero(mask)))


def quantile_rank(n: int, alpha: float) -> int:
    """1-indexed order statistic ``ceil((n + 1)(1 - alpha))`` used as the threshold."""
    return math.ceil((n + 1) * (1.0 - alpha))


def calibrate_threshold(cal_scores, alpha, kind=None) -> ConformalThreshold:
    """Conformal quantile of the calibration scores.

    Returns the k-th smallest score with ``k = ceil((N+1)(1-alpha))``, or
    ``+inf`` when ``k > N`` (every label is then admitted).
    """
    alpha = check_alpha(alpha)
    scores = np.asarray(cal_scores, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise DataError("cannot calibrate on an empty score vector")
    if not np.all(np.isfinite(scores)):
        raise DataError("calibration scores must be finite")
    n = scores.size
    k = quantile_rank(n, alpha)
    s_hat = math.inf if k > n else float(np.partition(scores, k - 1)[k - 1])
    kind = ScoreKind() if kind is None else as_score_kind(kind)
    return ConformalThreshold(s_hat, alpha, kind, n)


def _check_kind(threshold, kind):
    if kind is not None and as_score_kind(kind) != threshold.kind:
        raise ContractError(
            f"threshold was calibrated with {threshold.kind!r}, cannot be applied to {kind!r}")


def build_prediction_set(label_scores, threshold: ConformalThreshold, kind=None) -> PredictionSet:
    """Labels whose score does not exceed the threshold."""
    _check_kind(threshold, kind)
    scores = np.asarray(label_scores, dtype=np.float64).reshape(-1)
    return PredictionSet.from_mask(scores <= threshold.s_hat)


def prediction_masks(score_mat, threshold: ConformalThreshold, kind=None) -> np.ndarray:
    """Boolean K x n membership matrix for a whole score matrix."""
    _check_kind(threshold, kind)
    return np.asarray(score_mat, dtype=np.float64) <= threshold.s_hat


def masks_to_sets(masks) -> list:
    """Convert a K x n membership matrix to a list of :class:`PredictionSet`."""
    masks = np.asarray(masks, dtype=bool)
    return [PredictionSet.from_mask(masks[:, i]) for i in range(masks.shape[1])]


def conformal_masks(cal_probs, cal_labels, query_probs, kind, alpha, seed=None, u=None):
    """Three-step split conformal recipe on probability columns.

    Returns ``(masks, threshold)`` where ``masks`` is the K x M membership
    matrix of the query sets. One tie-breaking stream covers calibration
    then query samples, in that order; pass ``u`` to supply it directly.
    """
    kind = as_score_kind(kind)
    cal = np.asarray(getattr(cal_probs, "values", cal_probs), dtype=np.float64)
    query = np.asarray(getattr(query_probs, "values", query_probs), dtype=np.float64)
    if query.ndim == 1 and query.size == 0:
        query = query.reshape(cal.shape[0], 0)
    if cal.ndim != 2 or query.ndim != 2 or cal.shape[0] != query.shape[0]:
        raise ShapeError(f"calibration {cal.shape} and query {query.shape} disagree on classes")
    n_cal, n_query = cal.shape[1], query.shape[1]
    labels = check_labels(cal_labels, cal.shape[0], n_cal)
    if u is None:
        u = tie_breaker(n_cal + n_query, seed)
    u = check_tie_breaker(u, n_cal + n_query)
    cal_scores = score_true_labels(cal, labels, u[:n_cal], kind)
    threshold = calibrate_threshold(cal_scores, alpha, kind)
    if n_query == 0:
        return np.zeros((cal.shape[0], 0), dtype=bool), threshold
    return prediction_masks(score_matrix(query, u[n_cal:], kind), threshold), threshold


def conformal_pipeline(cal_probs, cal_labels, query_probs, kind, alpha, seed=None, u=None) -> list:
    """Per-query :class:`PredictionSet` list from the split conformal recipe."""
    masks, _ = conformal_masks(cal_probs, cal_labels, query_probs, kind, alpha, seed=seed, u=u)
    return masks_to_sets(masks)


class SplitConformalClassifier(BaseEstimator, ClassifierMixin):
    """Split conformal prediction sets on top of black-box logits.

    Parameters
    ----------
    nonconformity : {"lac", "aps", "raps"} or ScoreKind
        Non-conformity score.
    alpha : float
        Target miscoverage rate in (0, 1).
    temperature : float
        Softmax temperature applied to the logits.
    raps_lambda, raps_k_reg : float, int
        RAPS penalty weight and the rank where the penalty starts.
    random_state : int or None
        Seed of the tie-breaking stream (calibration draws first, then queries).

    Attributes
    ----------
    threshold_ : ConformalThreshold
    classes_ : ndarray of shape (n_classes,)

    Notes
    -----
    ``X`` is sample-major ``(n_samples, n_classes)`` like every scikit-learn
    estimator; the functional API in this package is class-major.
    """

    def __init__(self, nonconformity="lac", alpha=0.1, temperature=1.0, raps_lambda=0.001,
                 raps_k_reg=1, random_state=None):
        self.nonconformity = nonconformity
        self.alpha = alpha
        self.temperature = temperature
        self.raps_lambda = raps_lambda
        self.raps_k_reg = raps_k_reg
        self.random_state = random_state

    def _kind(self):
        return as_score_kind(self.nonconformity, self.raps_lambda, self.raps_k_reg)

    def fit(self, X, y):
        logits = check_matrix(np.asarray(X, dtype=np.float64).T, name="X")
        check_positive(self.temperature, "temperature")
        labels = check_labels(y, logits.shape[0], logits.shape[1], name="y")
        self.classes_ = np.arange(logits.shape[0])
        self.n_calibration_ = logits.shape[1]
        u = tie_breaker(self.n_calibration_, self.random_state)
        probs = softmax_columns(logits, self.temperature)
        self.calibration_scores_ = score_true_labels(probs, labels, u, self._kind())
        self.threshold_ = calibrate_threshold(self.calibration_scores_, self.alpha, self._kind())
        return self

    def _query_probs(self, X):
        check_is_fitted(self, "threshold_")
        logits = check_matrix(np.asarray(X, dtype=np.float64).T, name="X")
        if logits.shape[0] != len(self.classes_):
            raise ShapeError(f"X has {logits.shape[0]} classes, expected {len(self.classes_)}")
        return softmax_columns(logits, self.temperature)

    def predict_proba(self, X):
        return self._query_probs(X).T

    def predict(self, X):
        return argmax_class(self._query_probs(X))

    def predict_set(self, X, u=None):
        """Boolean membership matrix of shape ``(n_samples, n_classes)``."""
        probs = self._query_probs(X)
        if u is None:
            stream = tie_breaker(self.n_calibration_ + probs.shape[1], self.random_state)
            u = stream[self.n_calibration_:]
        scores = score_matrix(probs, u, self.threshold_.kind)
        return prediction_masks(scores, self.threshold_).T
