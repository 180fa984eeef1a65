"""Non-conformity scores for classification: LAC, APS and RAPS.

Smaller scores mean a label conforms better. Scores operate on probability
columns, which are either softmax outputs or normalized transport codes.
"""

from __future__ import annotations

import numbers
from dataclasses import dataclass

import numpy as np

from .exceptions import ParameterError, ShapeError
from .validation import check_tie_breaker

LAC = "lac"
APS = "aps"
RAPS = "raps"


@dataclass(frozen=True)
class ScoreKind:
    """A non-conformity score and its hyper-parameters.

    ``lam`` and ``k_reg`` only matter for RAPS.
    """

    name: str = LAC
    lam: float = 0.0
    k_reg: int = 0

    def __post_init__(self):
        name = str(self.name).lower()
        if name not in (LAC, APS, RAPS):
            raise ParameterError(f"unknown score {self.name!r}; expected one of lac, aps, raps")
        object.__setattr__(self, "name", name)
        if name != RAPS:
            object.__setattr__(self, "lam", 0.0)
            object.__setattr__(self, "k_reg", 0)
            return
        if not isinstance(self.lam, numbers.Real) or not np.isfinite(self.lam) or self.lam < 0:
            raise ParameterError(f"RAPS lambda must be >= 0, got {self.lam!r}")
        if isinstance(self.k_reg, bool) or not isinstance(self.k_reg, numbers.Integral) or self.k_reg < 0:
            raise ParameterError(f"RAPS k_reg must be a nonnegative integer, got {self.k_reg!r}")
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "k_reg", int(self.k_reg))

    @classmethod
    def lac(cls):
        return cls(LAC)

    @classmethod
    def aps(cls):
        return cls(APS)

    @classmethod
    def raps(cls, lam=0.001, k_reg=1):
        return cls(RAPS, lam, k_reg)

    @property
    def randomized(self) -> bool:
        return self.name != LAC

    def max_score(self, n_classes: int) -> float:
        return 1.0 + self.lam * max(0, n_classes - self.k_reg)

    def __str__(self):
        return self.name


def as_score_kind(kind, raps_lambda=0.001, raps_k_reg=1) -> ScoreKind:
    """Accept a :class:`ScoreKind` or a score name; RAPS names get the given defaults."""
    if isinstance(kind, ScoreKind):
        return kind
    if str(kind).lower() == RAPS:
        return ScoreKind.raps(raps_lambda, raps_k_reg)
    return ScoreKind(kind)


def tie_breaker(n_samples: int, seed=None) -> np.ndarray:
    """One uniform draw per sample from a seeded stream."""
    return np.random.default_rng(seed).random(n_samples)


def _check_column(probs_column, label=None):
    p = np.asarray(probs_column, dtype=np.float64).reshape(-1)
    if label is not None:
        if isinstance(label, bool) or not isinstance(label, numbers.Integral):
            raise IndexError(f"label must be an integer class index, got {label!r}")
        if not 0 <= label < p.shape[0]:
            raise IndexError(f"label {label} out of range for {p.shape[0]} classes")
    return p


def _check_u(u):
    if not isinstance(u, numbers.Real) or not 0.0 <= float(u) <= 1.0:
        raise ParameterError(f"u must lie in [0, 1], got {u!r}")
    return float(u)


def lac_score(probs_column, label) -> float:
    p = _check_column(probs_column, label)
    return float(1.0 - p[label])


def aps_score(probs_column, label, u) -> float:
    """Mass of strictly more likely classes plus ``u`` times the label's own mass."""
    p = _check_column(probs_column, label)
    u = _check_u(u)
    p_y = p[label]
    greater = -np.sort(-p[p > p_y])
    return float(greater.sum() + p_y * u)


def raps_score(probs_column, label, u, lam, k_reg) -> float:
    """APS plus ``lam * max(0, rank - k_reg)`` with rank = 1 + #strictly larger classes."""
    kind = ScoreKind.raps(lam, k_reg)
    aps = aps_score(probs_column, label, u)
    if kind.lam == 0.0:
        return aps
    p = np.asarray(probs_column, dtype=np.float64).reshape(-1)
    rank = int(np.count_nonzero(p > p[label])) + 1
    return aps + kind.lam * max(0, rank - kind.k_reg)


def _cumulative_scores(probs: np.ndarray, u: np.ndarray, kind: ScoreKind) -> np.ndarray:
    """APS/RAPS score of every label of every column of a K x n matrix."""
    n_classes, n_samples = probs.shape
    order = np.argsort(-probs, axis=0, kind="stable")
    sorted_p = np.take_along_axis(probs, order, axis=0)
    # exclusive cumulative mass in descending order
    excl = np.zeros_like(sorted_p)
    np.cumsum(sorted_p[:-1], axis=0, out=excl[1:])
    # tied entries share the mass of the classes strictly above their run
    idx = np.arange(n_classes)[:, None]
    new_run = np.ones_like(sorted_p, dtype=bool)
    new_run[1:] = sorted_p[1:] != sorted_p[:-1]
    run_start = np.maximum.accumulate(np.where(new_run, idx, 0), axis=0)
    rho = np.take_along_axis(excl, run_start, axis=0)
    sorted_scores = rho + sorted_p * u[None, :]
    if kind.name == RAPS and kind.lam != 0.0:
        sorted_scores = sorted_scores + kind.lam * np.maximum(0, run_start + 1 - kind.k_reg)
    scores = np.empty_like(sorted_scores)
    np.put_along_axis(scores, order, sorted_scores, axis=0)
    return scores


def score_matrix(probs, u, kind) -> np.ndarray:
    """Scores for every (label, sample) pair of a K x n probability matrix.

    ``u`` holds one tie-breaking draw per sample, shared by all of that
    sample's labels; it is ignored by LAC.
    """
    kind = as_score_kind(kind)
    p = np.asarray(getattr(probs, "values", probs), dtype=np.float64)
    if p.ndim != 2:
        raise ShapeError(f"expected a K x n matrix, got shape {p.shape}")
    if kind.name == LAC:
        return 1.0 - p
    u = check_tie_breaker(u, p.shape[1])
    return _cumulative_scores(p, u, kind)


def score_true_labels(probs, labels, u, kind) -> np.ndarray:
    """Score of each sample's own label (the calibration scores)."""
    p = np.asarray(getattr(probs, "values", probs), dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (p.shape[1],):
        raise ShapeError(f"labels has shape {labels.shape}, expected ({p.shape[1]},)")
    full = score_matrix(p, u, kind)
    return full[labels, np.arange(p.shape[1])]


def score_all_labels(probs_column, u, kind) -> np.ndarray:
    """Length-K vector of scores for one sample, same ``u`` for every label."""
    p = _check_column(probs_column)
    kind = as_score_kind(kind)
    if kind.randomized:
        u = _check_u(u)
    else:
        u = 0.0
    return score_matrix(p[:, None], np.array([u]), kind)[:, 0]
