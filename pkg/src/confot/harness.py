"""Repeated-split experiments comparing plain split conformal with Conf-OT."""

from __future__ import annotations

import datetime as _dt
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import io as dio
from .conformal import conformal_masks
from .core import LabeledSplit, softmax_columns
from .exceptions import DataError, ParameterError
from .metrics import evaluate
from .scores import ScoreKind, as_score_kind, tie_breaker
from .transport import TransportConfig, masks_from_chunks, transduce_chunks
from .validation import check_alpha, check_positive, check_positive_int

logger = logging.getLogger(__name__)

BASE = "base"
CONF_OT = "conf_ot"
METHODS = (BASE, CONF_OT)
METRIC_KEYS = (("top1", "top1"), ("cov", "coverage"), ("size", "avg_size"), ("ccv", "ccv"))


def default_scores():
    return [ScoreKind.lac(), ScoreKind.aps(), ScoreKind.raps(0.001, 1)]


@dataclass
class ExperimentConfig:
    logits_path: str | None = None
    labels_path: str | None = None
    alphas: list = field(default_factory=lambda: [0.1, 0.05])
    scores: list = field(default_factory=default_scores)
    methods: list = field(default_factory=lambda: list(METHODS))
    cal_ratio: float = 0.5
    seeds: int = 20
    base_seed: int = 0
    transport: TransportConfig = field(default_factory=TransportConfig)
    base_temperature: float = 1.0
    query_batch_size: int | None = None
    reuse_threshold: bool = False
    output_path: str | None = None
    output_format: str = "json"
    n_jobs: int = 1

    def __post_init__(self):
        if not self.alphas:
            raise ParameterError("at least one alpha is required")
        self.alphas = [check_alpha(a) for a in self.alphas]
        self.scores = [as_score_kind(s) for s in self.scores]
        if not self.scores:
            raise ParameterError("at least one score is required")
        methods = [CONF_OT if m in ("conf-ot", "confot") else m for m in self.methods]
        unknown = set(methods) - set(METHODS)
        if unknown or not methods:
            raise ParameterError(f"methods must be a nonempty subset of {METHODS}, got {self.methods}")
        self.methods = [m for m in METHODS if m in methods]
        if not 0.0 < self.cal_ratio < 1.0:
            raise ParameterError(f"cal_ratio must lie strictly inside (0, 1), got {self.cal_ratio}")
        check_positive_int(self.seeds, "seeds")
        check_positive(self.base_temperature, "base_temperature")
        if self.query_batch_size is not None:
            check_positive_int(self.query_batch_size, "query_batch_size")
        if self.output_format not in ("json", "csv"):
            raise ParameterError(f"output_format must be json or csv, got {self.output_format!r}")

    def echo(self) -> dict:
        t = self.transport
        return {
            "logits_path": self.logits_path,
            "labels_path": self.labels_path,
            "alphas": list(self.alphas),
            "scores": [{"name": s.name, "lambda": s.lam, "k_reg": s.k_reg} for s in self.scores],
            "methods": list(self.methods),
            "cal_ratio": self.cal_ratio,
            "seeds": self.seeds,
            "base_seed": self.base_seed,
            "transport": {"temperature": t.temperature, "iterations": t.iterations, "prior": t.prior,
                          "epsilon_floor": t.epsilon_floor, "laplace_smoothing": t.laplace_smoothing},
            "base_temperature": self.base_temperature,
            "query_batch_size": self.query_batch_size,
            "reuse_threshold": self.reuse_threshold,
        }


def load_dataset(logits_path, labels_path) -> LabeledSplit:
    logits = dio.load_logits(logits_path)
    labels = dio.load_labels_csv(labels_path)
    if labels.shape[0] != logits.shape[1]:
        raise DataError(f"{labels.shape[0]} labels for {logits.shape[1]} logit rows")
    return LabeledSplit(logits, labels)


def _streams(seed):
    split_seq, tie_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(split_seq), tie_seq


def split_cal_test(data: LabeledSplit, cal_ratio, seed):
    """Seeded random partition: the first ``floor(n * cal_ratio)`` permuted indices calibrate."""
    n = data.num_samples
    if not 0.0 < cal_ratio < 1.0:
        raise ParameterError(f"cal_ratio must lie strictly inside (0, 1), got {cal_ratio}")
    n_cal = math.floor(n * cal_ratio)
    if n_cal < 1 or n_cal >= n:
        raise DataError(f"{n} samples at cal_ratio {cal_ratio} leave an empty split")
    rng, _ = _streams(seed)
    perm = rng.permutation(n)
    return data.subset(perm[:n_cal]), data.subset(perm[n_cal:])


def run_trial(config: ExperimentConfig, seed, data: LabeledSplit | None = None) -> dict:
    """One calibration/test split; returns ``{(method, score, alpha): MetricsReport}``.

    Both methods see the same split and the same tie-breaking stream.
    """
    if data is None:
        data = load_dataset(config.logits_path, config.labels_path)
    cal, test = split_cal_test(data, config.cal_ratio, seed)
    _, tie_seq = _streams(seed)
    u = tie_breaker(cal.num_samples + test.num_samples, tie_seq)
    n_classes = data.num_classes
    cal_logits, test_logits = cal.logits.values, test.logits.values
    results = {}

    if BASE in config.methods:
        cal_probs = softmax_columns(cal_logits, config.base_temperature)
        test_probs = softmax_columns(test_logits, config.base_temperature)
        for kind in config.scores:
            for alpha in config.alphas:
                masks, _ = conformal_masks(cal_probs, cal.labels, test_probs, kind, alpha, u=u)
                results[(BASE, kind.name, alpha)] = evaluate(masks, test.labels, test_probs, alpha, n_classes)

    if CONF_OT in config.methods:
        chunks = transduce_chunks(cal_logits, cal.labels, test_logits, config.transport,
                                  config.query_batch_size)
        full = chunks
        if config.reuse_threshold and len(chunks) > 1:
            full = transduce_chunks(cal_logits, cal.labels, test_logits, config.transport)
        test_codes = np.concatenate([c[3] for c in chunks], axis=1)
        for kind in config.scores:
            for alpha in config.alphas:
                fixed = None
                if full is not chunks:
                    _, (fixed,) = masks_from_chunks(full, cal.labels, kind, alpha, u)
                masks, _ = masks_from_chunks(chunks, cal.labels, kind, alpha, u, fixed)
                results[(CONF_OT, kind.name, alpha)] = evaluate(masks, test.labels, test_codes, alpha, n_classes)
    return results


def _row_key(config):
    for method in config.methods:
        for kind in config.scores:
            for alpha in config.alphas:
                yield method, kind.name, alpha


def aggregate(config: ExperimentConfig, trials, seeds) -> dict:
    """Mean/std per (method, score, alpha) plus paired base-vs-Conf-OT size statistics."""
    rows = []
    by_key = {}
    for key in _row_key(config):
        method, score, alpha = key
        reports = [t[key] for t in trials]
        row = {"method": method, "score": score, "alpha": alpha, "seeds": len(reports),
               "per_seed": {"seed": list(seeds)}}
        for short, attr in METRIC_KEYS:
            values = np.array([getattr(r, attr) for r in reports], dtype=np.float64)
            row[f"{short}_mean"] = float(values.mean())
            row[f"{short}_std"] = float(values.std())
            row["per_seed"][short] = values.tolist()
        rows.append(row)
        by_key[key] = row

    paired = []
    if BASE in config.methods and CONF_OT in config.methods:
        for kind in config.scores:
            for alpha in config.alphas:
                base = np.array(by_key[(BASE, kind.name, alpha)]["per_seed"]["size"])
                ot = np.array(by_key[(CONF_OT, kind.name, alpha)]["per_seed"]["size"])
                diff = base - ot
                paired.append({
                    "score": kind.name, "alpha": alpha,
                    "size_reduction_mean": float(diff.mean()),
                    "size_reduction_std": float(diff.std()),
                    "relative_size_reduction": float(1.0 - ot.mean() / base.mean()) if base.mean() > 0 else 0.0,
                    "seeds_with_reduction": int(np.sum(diff > 0)),
                })
    return {"rows": rows, "paired": paired}


def run_experiment(config: ExperimentConfig, data: LabeledSplit | None = None, timestamp=None) -> dict:
    """Run every seed, aggregate, and write the report if ``output_path`` is set."""
    if data is None:
        data = load_dataset(config.logits_path, config.labels_path)
    seeds = [config.base_seed + i for i in range(config.seeds)]
    report = {
        "config": config.echo(),
        "n_samples": data.num_samples,
        "n_classes": data.num_classes,
        "notes": "classes absent from a test split are excluded from that split's CCV",
        "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    trials = []
    try:
        if config.n_jobs == 1:
            for seed in seeds:
                trials.append(run_trial(config, seed, data))
        else:
            trials = Parallel(n_jobs=config.n_jobs)(delayed(run_trial)(config, s, data) for s in seeds)
    except Exception as exc:
        done = seeds[:len(trials)]
        report.update(aggregate(config, trials, done) if trials else {"rows": [], "paired": []})
        report.update(status="failed", error=f"{type(exc).__name__}: {exc}", completed_seeds=done)
        if config.output_path:
            dio.write_report(report, config.output_path, config.output_format)
        raise
    report.update(aggregate(config, trials, seeds))
    report["status"] = "complete"
    if config.output_path:
        dio.write_report(report, config.output_path, config.output_format)
    return report
