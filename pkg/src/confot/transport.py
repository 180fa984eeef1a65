"""Transductive optimal-transport transfer of calibration and query logits.

Calibration and query logits are stacked into one K x (N + M) similarity
matrix. A few Sinkhorn-Knopp rescalings push the row marginal of the
resulting plan towards the calibration label frequencies and the column
marginal towards uniform. The column-normalized plan ("codes") then replaces
the softmax probabilities as input to split conformal prediction. Because
calibration and query columns are processed jointly and symmetrically,
exchangeability, and therefore the coverage guarantee, is preserved.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .conformal import calibrate_threshold, conformal_masks, masks_to_sets, prediction_masks
from .core import ClassMarginal, argmax_class
from .exceptions import NumericError, ParameterError, ShapeError
from .scores import as_score_kind, score_matrix, score_true_labels, tie_breaker
from .validation import (check_alpha, check_labels, check_matrix, check_positive,
                         check_positive_int, check_tie_breaker)

logger = logging.getLogger(__name__)

EMPIRICAL = "empirical"
UNIFORM = "uniform"


@dataclass(frozen=True)
class TransportConfig:
    """Hyper-parameters of the transport step.

    ``tol`` switches to a convergence mode: iterate until the row-marginal
    residual drops below ``tol`` or ``iterations`` is reached.
    """

    temperature: float = 1.0
    iterations: int = 3
    prior: str = EMPIRICAL
    epsilon_floor: float = 1e-12
    laplace_smoothing: bool = False
    tol: float | None = None

    def __post_init__(self):
        check_positive(self.temperature, "temperature")
        check_positive_int(self.iterations, "iterations")
        if self.prior not in (EMPIRICAL, UNIFORM):
            raise ParameterError(f"prior must be 'empirical' or 'uniform', got {self.prior!r}")
        if not self.epsilon_floor >= 0:
            raise ParameterError("epsilon_floor must be nonnegative")
        if self.tol is not None:
            check_positive(self.tol, "tol")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Result of :func:`sinkhorn_codes`.

    ``codes`` is column-normalized. ``row_sums`` and ``col_sums`` are the
    marginals of the plan before that normalization, kept for diagnostics.
    """

    codes: np.ndarray
    row_marginal: ClassMarginal
    column_marginal_mass: float
    row_scaling: np.ndarray
    col_scaling: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    n_iter: int = field(default=0)

    def row_residual(self) -> float:
        return float(np.max(np.abs(self.row_sums - self.row_marginal.weights)))

    def col_residual(self) -> float:
        return float(np.max(np.abs(self.col_sums - self.column_marginal_mass)))


def assemble_joint_matrix(cal_logits, query_logits) -> np.ndarray:
    """Stack calibration columns then query columns into one K x (N + M) matrix."""
    cal = check_matrix(cal_logits, name="calibration logits")
    query = np.asarray(getattr(query_logits, "values", query_logits), dtype=np.float64)
    if query.size == 0:
        return cal.copy()
    query = check_matrix(query, name="query logits")
    if query.shape[0] != cal.shape[0]:
        raise ShapeError(f"calibration has {cal.shape[0]} classes but query has {query.shape[0]}")
    return np.concatenate([cal, query], axis=1)


def estimate_label_marginal(cal_labels, n_classes, prior=EMPIRICAL, laplace_smoothing=False) -> ClassMarginal:
    """Class frequencies of the calibration labels, or the uniform distribution."""
    if prior == UNIFORM:
        return ClassMarginal(np.full(n_classes, 1.0 / n_classes))
    if prior != EMPIRICAL:
        raise ParameterError(f"prior must be 'empirical' or 'uniform', got {prior!r}")
    labels = check_labels(cal_labels, n_classes)
    if labels.size == 0:
        raise ParameterError("the empirical prior needs at least one calibration label")
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    if laplace_smoothing:
        counts += 1.0
    return ClassMarginal(counts / counts.sum())


def sinkhorn_codes(similarity, kappa, config: TransportConfig | None = None) -> TransportPlan:
    """Entropic transport plan between classes (marginal ``kappa``) and samples (uniform).

    The kernel is the global softmax of ``similarity / temperature``; row and
    column scalings are alternated ``config.iterations`` times starting from
    an all-ones column scaling, then every column of the plan is normalized
    to sum to one.
    """
    config = TransportConfig() if config is None else config
    S = check_matrix(similarity, name="similarity", min_rows=1)
    kappa = kappa if isinstance(kappa, ClassMarginal) else ClassMarginal(kappa)
    n_classes, n_samples = S.shape
    if len(kappa) != n_classes:
        raise ShapeError(f"kappa has {len(kappa)} entries, expected {n_classes}")
    if np.any(kappa.weights == 0):
        warnings.warn(
            f"{int(np.sum(kappa.weights == 0))} class(es) have zero prior mass; "
            "their code rows will be all zeros", RuntimeWarning, stacklevel=2)

    eps = config.epsilon_floor
    k = kappa.weights
    nu = 1.0 / n_samples

    q = S / config.temperature
    q -= q.max()
    np.exp(q, out=q)
    q /= q.sum()

    c = np.ones(n_samples)
    n_iter = 0
    for n_iter in range(1, config.iterations + 1):
        row = q @ c
        r = k / np.maximum(row, eps)
        c = nu / np.maximum(q.T @ r, eps)
        if config.tol is not None:
            # columns are exact after the c update; only rows lag behind
            if np.max(np.abs(r * (q @ c) - k)) <= config.tol:
                break
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(c))):
        raise NumericError("Sinkhorn scalings became non-finite; try a larger temperature")
    logger.debug("sinkhorn finished after %d iterations", n_iter)

    q *= r[:, None]
    q *= c[None, :]
    row_sums = q.sum(axis=1)
    col_sums = q.sum(axis=0)
    q /= np.maximum(col_sums, eps)[None, :]
    return TransportPlan(q, kappa, nu, r, c, row_sums, col_sums, n_iter)


def conf_ot_codes(cal_logits, cal_labels, query_logits, config: TransportConfig | None = None):
    """Run the joint transduction; returns ``(cal_codes, query_codes, plan)``."""
    config = TransportConfig() if config is None else config
    joint = assemble_joint_matrix(cal_logits, query_logits)
    n_cal = np.asarray(getattr(cal_logits, "values", cal_logits)).shape[1]
    labels = check_labels(cal_labels, joint.shape[0], n_cal)
    kappa = estimate_label_marginal(labels, joint.shape[0], config.prior, config.laplace_smoothing)
    plan = sinkhorn_codes(joint, kappa, config)
    return plan.codes[:, :n_cal], plan.codes[:, n_cal:], plan


def transduce_chunks(cal_logits, cal_labels, query_logits, config=None, batch_size=None) -> list:
    """Codes for each query chunk, each transduced jointly with the full calibration set.

    Returns a list of ``(start, stop, cal_codes, query_codes)``; a single
    chunk covers every query when ``batch_size`` is None or >= M.
    """
    config = TransportConfig() if config is None else config
    cal = check_matrix(cal_logits, name="calibration logits")
    query = np.asarray(getattr(query_logits, "values", query_logits), dtype=np.float64)
    if query.size == 0:
        return []
    n_query = query.shape[1]
    step = n_query if batch_size is None else min(check_positive_int(batch_size, "batch_size"), n_query)
    chunks = []
    for start in range(0, n_query, step):
        stop = min(start + step, n_query)
        cal_codes, query_codes, _ = conf_ot_codes(cal, cal_labels, query[:, start:stop], config)
        chunks.append((start, stop, cal_codes, query_codes))
    return chunks


def masks_from_chunks(chunks, cal_labels, kind, alpha, u, fixed_threshold=None):
    """Conformalize transduced chunks; ``u`` covers calibration then all queries.

    Each chunk is calibrated on its own calibration codes unless
    ``fixed_threshold`` is given.
    """
    kind = as_score_kind(kind)
    labels = np.asarray(cal_labels, dtype=np.int64)
    n_cal = labels.shape[0]
    n_query = chunks[-1][1] if chunks else 0
    u = check_tie_breaker(u, n_cal + n_query)
    n_classes = chunks[0][2].shape[0] if chunks else 0
    masks = np.zeros((n_classes, n_query), dtype=bool)
    thresholds = []
    for start, stop, cal_codes, query_codes in chunks:
        chunk_u = np.concatenate([u[:n_cal], u[n_cal + start:n_cal + stop]])
        if fixed_threshold is None:
            masks[:, start:stop], threshold = conformal_masks(
                cal_codes, labels, query_codes, kind, alpha, u=chunk_u)
        else:
            threshold = fixed_threshold
            masks[:, start:stop] = prediction_masks(
                score_matrix(query_codes, chunk_u[n_cal:], kind), threshold)
        thresholds.append(threshold)
    return masks, thresholds


def conf_ot_masks(cal_logits, cal_labels, query_logits, kind, alpha, config=None, seed=None,
                  u=None, batch_size=None, reuse_threshold=False):
    """Conf-OT prediction sets as a K x M membership matrix.

    With ``batch_size``, queries are transduced in consecutive chunks, each
    jointly with the full calibration set; the threshold is recomputed from
    each chunk's calibration codes unless ``reuse_threshold`` is set, in
    which case the full-batch threshold is applied to every chunk.

    Returns ``(masks, thresholds)`` with one threshold per chunk.
    """
    kind = as_score_kind(kind)
    alpha = check_alpha(alpha)
    cal = check_matrix(cal_logits, name="calibration logits")
    query = np.asarray(getattr(query_logits, "values", query_logits), dtype=np.float64)
    if query.size == 0:
        query = query.reshape(cal.shape[0], 0)
    n_cal, n_query = cal.shape[1], query.shape[1]
    labels = check_labels(cal_labels, cal.shape[0], n_cal)
    if u is None:
        u = tie_breaker(n_cal + n_query, seed)
    u = check_tie_breaker(u, n_cal + n_query)
    if n_query == 0:
        return np.zeros((cal.shape[0], 0), dtype=bool), []
    fixed = None
    if reuse_threshold and batch_size is not None and batch_size < n_query:
        (_, _, cal_codes, _), = transduce_chunks(cal, labels, query, config)
        fixed = calibrate_threshold(score_true_labels(cal_codes, labels, u[:n_cal], kind), alpha, kind)
    chunks = transduce_chunks(cal, labels, query, config, batch_size)
    return masks_from_chunks(chunks, labels, kind, alpha, u, fixed)


def conf_ot_pipeline(cal_logits, cal_labels, query_logits, config=None, kind="lac", alpha=0.1,
                     seed=None, u=None, batch_size=None) -> list:
    """Per-query :class:`PredictionSet` list produced through transport codes."""
    masks, _ = conf_ot_masks(cal_logits, cal_labels, query_logits, kind, alpha, config=config,
                             seed=seed, u=u, batch_size=batch_size)
    return masks_to_sets(masks)


class ConfOTClassifier(BaseEstimator, ClassifierMixin, TransformerMixin):
    """Transductive conformal classifier built on Sinkhorn transport codes.

    ``fit`` stores the labeled calibration logits; every call to
    ``transform``, ``predict`` or ``predict_set`` transduces the given query
    batch jointly with them.

    Parameters
    ----------
    nonconformity : {"lac", "aps", "raps"} or ScoreKind
    alpha : float
        Target miscoverage rate in (0, 1).
    temperature : float
        Entropic temperature of the transport kernel.
    n_iter : int
        Number of Sinkhorn iterations.
    prior : {"empirical", "uniform"}
        Label marginal imposed on the plan rows.
    laplace_smoothing : bool
        Add one pseudo-count per class to the empirical prior.
    batch_size : int or None
        Transduce queries in chunks of this size.
    raps_lambda, raps_k_reg : float, int
    random_state : int or None
        Seed of the tie-breaking stream (calibration draws first, then queries).

    Attributes
    ----------
    label_marginal_ : ClassMarginal
    classes_ : ndarray of shape (n_classes,)
    thresholds_ : list of ConformalThreshold
        Thresholds of the most recent ``predict_set`` call.
    """

    def __init__(self, nonconformity="lac", alpha=0.1, temperature=1.0, n_iter=3, prior=EMPIRICAL,
                 laplace_smoothing=False, batch_size=None, raps_lambda=0.001, raps_k_reg=1,
                 random_state=None):
        self.nonconformity = nonconformity
        self.alpha = alpha
        self.temperature = temperature
        self.n_iter = n_iter
        self.prior = prior
        self.laplace_smoothing = laplace_smoothing
        self.batch_size = batch_size
        self.raps_lambda = raps_lambda
        self.raps_k_reg = raps_k_reg
        self.random_state = random_state

    def _config(self):
        return TransportConfig(self.temperature, self.n_iter, self.prior,
                               laplace_smoothing=self.laplace_smoothing)

    def fit(self, X, y):
        self._config()
        check_alpha(self.alpha)
        logits = check_matrix(np.asarray(X, dtype=np.float64).T, name="X")
        self.calibration_logits_ = logits
        self.calibration_labels_ = check_labels(y, logits.shape[0], logits.shape[1], name="y")
        self.classes_ = np.arange(logits.shape[0])
        self.label_marginal_ = estimate_label_marginal(
            self.calibration_labels_, logits.shape[0], self.prior, self.laplace_smoothing)
        return self

    def _query(self, X):
        check_is_fitted(self, "calibration_logits_")
        logits = check_matrix(np.asarray(X, dtype=np.float64).T, name="X")
        if logits.shape[0] != len(self.classes_):
            raise ShapeError(f"X has {logits.shape[0]} classes, expected {len(self.classes_)}")
        return logits

    def transform(self, X):
        """Normalized transport codes of the queries, shape ``(n_samples, n_classes)``."""
        _, query_codes, _ = conf_ot_codes(self.calibration_logits_, self.calibration_labels_,
                                          self._query(X), self._config())
        return query_codes.T

    def predict_proba(self, X):
        return self.transform(X)

    def predict(self, X):
        return argmax_class(self.transform(X).T)

    def predict_set(self, X, u=None):
        """Boolean membership matrix of shape ``(n_samples, n_classes)``."""
        query = self._query(X)
        n_cal = self.calibration_logits_.shape[1]
        if u is None:
            u = tie_breaker(n_cal + query.shape[1], self.random_state)
        else:
            u = np.concatenate([tie_breaker(n_cal, self.random_state),
                                check_tie_breaker(u, query.shape[1])])
        kind = as_score_kind(self.nonconformity, self.raps_lambda, self.raps_k_reg)
        masks, self.thresholds_ = conf_ot_masks(
            self.calibration_logits_, self.calibration_labels_, query, kind, self.alpha,
            config=self._config(), u=u, batch_size=self.batch_size)
        return masks.T
