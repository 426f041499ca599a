"""Command-line entry point: ``aggnash run|validate|oracle|rate``.

Exit codes: 0 success, 2 configuration error, 3 assumption violation,
4 every trial diverged.
"""

import json
import os
import sys

import click
import numpy as np

from .exceptions import AssumptionViolationError, ConfigError, InfeasibleSetError
from .experiments import (ExperimentConfig, emit_plot_script, generate, run_monte_carlo,
                          solve_oracle, trial_seeds)
from .oracles import coupling_rank_margin, fit_qlinear_rate
from .trace import read_csv

EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_ALL_DIVERGED = 4


def _load_config(path, seed=None, trials=None, threads=None):
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if seed is not None:
        doc["seed"] = seed
    if trials is not None:
        doc["trials"] = trials
    if threads is not None:
        doc["n_workers"] = threads
    return ExperimentConfig.from_dict(doc)


def _fail(message, code):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _emit(obj):
    click.echo(json.dumps(obj, indent=1, default=float))


@click.group()
def main():
    """Distributed equilibrium seeking in aggregative games."""


def _common(f):
    f = click.option("--quiet", is_flag=True, help="Print nothing on success.")(f)
    f = click.option("--threads", type=int, default=None, help="Worker threads per round.")(f)
    f = click.option("--trials", type=int, default=None, help="Override the trial count.")(f)
    f = click.option("--seed", type=int, default=None, help="Override the master seed.")(f)
    f = click.option("--config", "config_path", type=click.Path(), required=True,
                     help="Experiment config (JSON).")(f)
    return f


@main.command()
@_common
@click.option("--out", type=click.Path(), default="runs", show_default=True,
              help="Output directory for CSVs, summary.json and plot.py.")
def run(config_path, seed, trials, threads, quiet, out):
    """Run the Monte Carlo experiment described by --config."""
    try:
        cfg = _load_config(config_path, seed, trials, threads)
        summary = run_monte_carlo(cfg, out_dir=out)
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG)
    except (AssumptionViolationError, InfeasibleSetError) as exc:
        _fail(str(exc), EXIT_ASSUMPTION)
    emit_plot_script(summary, os.path.join(out, "plot.py"))
    if not quiet:
        ok = [t for t in summary["trials"] if t["status"] == "ok"]
        mean = summary["curve"]["mean"]
        click.echo(f"{summary['algorithm']} on {summary['case']}: {len(ok)}/"
                   f"{summary['n_trials']} trials ok, final mean error "
                   f"{mean[-1] if mean else float('nan'):.3e}; results in {out}")
    if summary["n_failed"] == summary["n_trials"]:
        sys.exit(EXIT_ALL_DIVERGED)


@main.command()
@_common
def validate(config_path, seed, trials, threads, quiet):
    """Check the standing assumptions on the first trial's instance."""
    try:
        cfg = _load_config(config_path, seed, trials, threads)
        game, network, x0, lam0 = generate(cfg, trial_seeds(cfg.params["seed"], 1)[0])
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG)
    except (AssumptionViolationError, InfeasibleSetError) as exc:
        _fail(str(exc), EXIT_ASSUMPTION)
    rep = network.report()
    mono = game.monotonicity_constants()
    checks = {"network": rep.to_dict(),
              "monotonicity": {"mu": mono.mu, "L": mono.L, "gamma_bound": mono.gamma_bound}}
    problems = list(rep.violations)
    if mono.mu <= 0:
        problems.append("pseudo-gradient is not strongly monotone")
    alg = cfg.params["algorithm"]
    if game.m > 0:
        margin = coupling_rank_margin(game)
        checks["coupling_rank_margin"] = margin
        if margin <= 1e-12:
            problems.append("coupling matrix lacks full row rank")
        if "rho" in alg:
            low = float(network.self_weights().min())
            checks["min_self_weight"] = low
            if low <= alg["delta"] / alg["rho"]:
                problems.append("some self weight does not exceed delta/rho")
    elif "gamma" in alg and alg["gamma"] >= mono.gamma_bound:
        problems.append("gamma is not below 2*mu/L^2")
    checks["violations"] = problems
    if not quiet:
        _emit(checks)
    if problems:
        sys.exit(EXIT_ASSUMPTION)


@main.command()
@_common
@click.option("--trial", type=int, default=0, show_default=True)
def oracle(config_path, seed, trials, threads, quiet, trial):
    """Solve the reference equilibrium of one trial and print it."""
    try:
        cfg = _load_config(config_path, seed, trials, threads)
        seeds = trial_seeds(cfg.params["seed"], max(cfg.params["trials"], trial + 1))
        game, *_ = generate(cfg, seeds[trial])
        x, lam, rep = solve_oracle(cfg, game)
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG)
    except (AssumptionViolationError, InfeasibleSetError) as exc:
        _fail(str(exc), EXIT_ASSUMPTION)
    out = {"x_star": np.asarray(x).tolist()}
    if lam is not None:
        out["lambda_star"] = np.asarray(lam).tolist()
        out["kkt"] = rep.to_dict()
    if not quiet:
        _emit(out)


@main.command()
@click.argument("csv_path", type=click.Path(exists=True))
@click.option("--column", default="err_to_oracle", show_default=True)
@click.option("--burn-in", type=int, default=0, show_default=True)
@click.option("--floor", type=float, default=0.0, show_default=True)
def rate(csv_path, column, burn_in, floor):
    """Fit a Q-linear rate to one column of a trace CSV."""
    cols, arr, _ = read_csv(csv_path)
    if column not in cols:
        _fail(f"column {column!r} not in {cols}", EXIT_CONFIG)
    try:
        fit = fit_qlinear_rate(arr[:, cols.index(column)], burn_in=burn_in, floor=floor)
    except ValueError as exc:
        _fail(str(exc), EXIT_CONFIG)
    _emit(fit.to_dict())


if __name__ == "__main__":
    main()
