"""Command line entry point: ``confot run | gen-synth | validate``."""

from __future__ import annotations

import functools
import logging
import sys

import click
import numpy as np

from . import io as dio
from .exceptions import DataError, ParameterError
from .harness import ExperimentConfig, load_dataset, run_experiment
from .scores import ScoreKind
from .synth import SHIFTS, make_logits
from .transport import TransportConfig

EXIT_CONFIG = 2
EXIT_DATA = 3


def _exit_codes(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ParameterError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (DataError, OSError) as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
    return wrapper


@click.group()
@click.option("-v", "--verbose", count=True, help="Increase log verbosity.")
def main(verbose):
    """Conformal prediction sets with transductive optimal-transport transfer."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--logits", "logits_path", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(dir_okay=False))
@click.option("--alpha", "alphas", multiple=True, type=float, help="Miscoverage rate; repeatable [0.1, 0.05].")
@click.option("--score", "scores", multiple=True, type=click.Choice(["lac", "aps", "raps"]),
              help="Non-conformity score; repeatable [all].")
@click.option("--raps-lambda", default=0.001, show_default=True, type=float)
@click.option("--raps-kreg", default=1, show_default=True, type=int)
@click.option("--method", "methods", multiple=True, type=click.Choice(["base", "conf-ot"]),
              help="Pipeline; repeatable [both].")
@click.option("--tau", default=1.0, show_default=True, type=float, help="Transport temperature.")
@click.option("--iters", default=3, show_default=True, type=int, help="Sinkhorn iterations.")
@click.option("--prior", default="empirical", show_default=True, type=click.Choice(["empirical", "uniform"]))
@click.option("--laplace", is_flag=True, help="Add one pseudo-count per class to the empirical prior.")
@click.option("--base-tau", default=1.0, show_default=True, type=float, help="Softmax temperature of the base pipeline.")
@click.option("--cal-ratio", default=0.5, show_default=True, type=float)
@click.option("--seeds", default=20, show_default=True, type=int)
@click.option("--base-seed", default=0, show_default=True, type=int)
@click.option("--batch-size", default=None, type=int, help="Transduce queries in chunks of this size.")
@click.option("--reuse-threshold", is_flag=True, help="In batch mode, apply the full-batch threshold to every chunk.")
@click.option("--jobs", "n_jobs", default=1, show_default=True, type=int)
@click.option("--out", "output_path", default="report.json", show_default=True, type=click.Path(dir_okay=False))
@click.option("--format", "output_format", default=None, type=click.Choice(["json", "csv"]),
              help="Report format [inferred from --out, else json].")
@_exit_codes
def run(logits_path, labels_path, alphas, scores, raps_lambda, raps_kreg, methods, tau, iters, prior,
        laplace, base_tau, cal_ratio, seeds, base_seed, batch_size, reuse_threshold, n_jobs,
        output_path, output_format):
    """Run repeated calibration/test splits and write an aggregated report."""
    if output_format is None:
        output_format = "csv" if output_path.lower().endswith(".csv") else "json"
    kinds = [ScoreKind.raps(raps_lambda, raps_kreg) if s == "raps" else ScoreKind(s)
             for s in (scores or ("lac", "aps", "raps"))]
    config = ExperimentConfig(
        logits_path=logits_path, labels_path=labels_path,
        alphas=list(alphas) or [0.1, 0.05], scores=kinds,
        methods=list(methods) or ["base", "conf_ot"],
        cal_ratio=cal_ratio, seeds=seeds, base_seed=base_seed,
        transport=TransportConfig(tau, iters, prior, laplace_smoothing=laplace),
        base_temperature=base_tau, query_batch_size=batch_size, reuse_threshold=reuse_threshold,
        output_path=output_path, output_format=output_format, n_jobs=n_jobs)
    report = run_experiment(config)
    for row in report["rows"]:
        click.echo(f"{row['method']:8s} {row['score']:5s} alpha={row['alpha']:<5g} "
                   f"top1={row['top1_mean']:.4f} cov={row['cov_mean']:.4f} "
                   f"size={row['size_mean']:.3f} ccv={row['ccv_mean']:.2f}")
    click.echo(f"report written to {output_path}")


@main.command("gen-synth")
@click.option("--classes", required=True, type=int)
@click.option("--cal", "n_cal", required=True, type=int)
@click.option("--test", "n_test", required=True, type=int)
@click.option("--shift", default="none", show_default=True, type=click.Choice(SHIFTS))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out-prefix", required=True, type=click.Path(dir_okay=False))
@click.option("--dtype", default="float64", show_default=True, type=click.Choice(["float32", "float64"]))
@_exit_codes
def gen_synth(classes, n_cal, n_test, shift, seed, out_prefix, dtype):
    """Write PREFIX.logits.bin and PREFIX.labels.csv with N + M synthetic samples.

    Run it with --cal-ratio N/(N+M) to reproduce the intended split sizes.
    """
    if n_cal < 1 or n_test < 1:
        raise ParameterError("--cal and --test must be positive")
    logits, labels = make_logits(classes, n_cal + n_test, shift, seed)
    dio.write_logits(f"{out_prefix}.logits.bin", logits, dtype)
    dio.write_labels_csv(f"{out_prefix}.labels.csv", labels)
    click.echo(f"wrote {out_prefix}.logits.bin and {out_prefix}.labels.csv "
               f"({n_cal + n_test} samples, {classes} classes, cal ratio {n_cal / (n_cal + n_test):g})")


@main.command()
@click.option("--logits", "logits_path", required=True, type=click.Path(dir_okay=False))
@click.option("--labels", "labels_path", required=True, type=click.Path(dir_okay=False))
@_exit_codes
def validate(logits_path, labels_path):
    """Check both files against the on-disk formats and each other."""
    data = load_dataset(logits_path, labels_path)
    counts = np.bincount(data.labels, minlength=data.num_classes)
    click.echo(f"ok: {data.num_samples} samples, {data.num_classes} classes, "
               f"{int(np.sum(counts == 0))} classes without samples")


if __name__ == "__main__":
    main()
