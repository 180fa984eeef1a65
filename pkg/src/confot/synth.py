"""Synthetic logit generators with controllable shift between upstream model and target data.

Samples of class ``y`` are drawn as ``x = separation * e_y + noise * z`` with
standard normal ``z``. The upstream model scores them with the Gaussian
log-likelihood ``separation * x / noise**2``, which is the Bayes-optimal
logit under a uniform class prior.

Shift modes:

``none``
    uniform target prior; logits are exactly calibrated.
``prior``
    target classes follow a skewed geometric prior the upstream model does
    not know about (label shift).
``temperature``
    uniform target prior, but logits are multiplied by ``logit_scale``
    (over-confident upstream model).
"""

from __future__ import annotations

import numpy as np

from .exceptions import ParameterError

SHIFTS = ("none", "prior", "temperature")


def geometric_prior(n_classes, decay=0.7) -> np.ndarray:
    w = decay ** np.arange(n_classes, dtype=np.float64)
    return w / w.sum()


def make_logits(n_classes, n_samples, shift="none", seed=None, separation=2.0, noise=1.0,
                prior_decay=0.7, logit_scale=3.0):
    """Return ``(logits, labels)`` with class-major logits of shape ``(n_classes, n_samples)``."""
    if shift not in SHIFTS:
        raise ParameterError(f"shift must be one of {SHIFTS}, got {shift!r}")
    if n_classes < 2 or n_samples < 1:
        raise ParameterError("need at least 2 classes and 1 sample")
    rng = np.random.default_rng(seed)
    if shift == "prior":
        prior = geometric_prior(n_classes, prior_decay)
    else:
        prior = np.full(n_classes, 1.0 / n_classes)
    labels = rng.choice(n_classes, size=n_samples, p=prior)
    x = noise * rng.standard_normal((n_classes, n_samples))
    x[labels, np.arange(n_samples)] += separation
    logits = (separation / noise**2) * x
    if shift == "temperature":
        logits *= logit_scale
    return logits, labels.astype(np.int64)
