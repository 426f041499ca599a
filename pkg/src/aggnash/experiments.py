"""Monte Carlo harness for the demand-response and coupling-constraint case studies."""

import copy
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import trades, trades_c
from .exceptions import (AggNashError, AssumptionViolationError, ConfigError, DivergenceError,
                         InfeasibleSetError, NoConvergenceError, SafeguardViolationError)
from .game import DeviationTrackingGame, DemandResponseGame, game_from_dict
from .network import build_erdos_renyi, build_ring, network_from_dict
from .oracles import coupling_rank_margin, fit_qlinear_rate, kkt_residual, solve_ne, solve_vgne
from .projections import DemandResponseLoad, is_nonempty
from .trace import TIMING_COLUMNS, read_csv

SCHEMA = "aggnash-trace/1"
WARMUP_ITERS = 10
# settings that change how a run executes but never what it computes
EXECUTION_KEYS = ("n_workers", "processes")

DR_DEFAULTS = {
    "N": 10, "T": 24,
    "graph": {"topology": "erdos_renyi", "p": 0.3},
    "algorithm": {"delta": 0.5, "gamma": 0.001},
    "draws": {"u_hat": [0.0, 1.0], "rho": [0.5, 1.5], "lam": [0.5, 1.5], "p0": [0.0, 1.0],
              "a": [0.9, 1.0], "b": [0.5, 1.5], "s1": [0.0, 10.0], "x0": [0.0, 1.0]},
    "u_bounds": [0.0, 1.0], "s_bounds": [0.0, 10.0],
    "max_iters": 20000,
}

COUPLING_DEFAULTS = {
    "N": 20, "dims": 2, "m": 3,
    "graph": {"topology": "ring", "self_weight": 0.6},
    "algorithm": {"delta": 0.05, "rho": 0.1},
    "draws": {"p": [0.0, 100.0], "w": [0.0, 1.0], "A": [0.0, 1.0], "b": [0.0, 100.0],
              "x0": [0.0, 100.0], "lam0": [0.0, 1.0]},
    "max_iters": 12000,
}

BASE_DEFAULTS = {"trials": 25, "seed": 0, "tol": None, "n_workers": 1, "processes": 1,
                 "max_redraws": 100,
                 "oracle": {"tol": None},
                 "rate": {"burn_in": 200, "floor": 1e-9}}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    Build it with :meth:`from_dict`; ``params`` holds the merged document
    (case defaults overridden by user keys).
    """

    case: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        case = doc.get("case")
        if case == "demand_response":
            params = _merge(_merge(BASE_DEFAULTS, DR_DEFAULTS), doc)
        elif case == "coupling":
            params = _merge(_merge(BASE_DEFAULTS, COUPLING_DEFAULTS), doc)
        elif case == "custom":
            params = _merge(BASE_DEFAULTS, doc)
            for key in ("game", "network", "algorithm", "max_iters"):
                if key not in params:
                    raise ConfigError(f"custom case needs {key!r}")
        else:
            raise ConfigError(f"unknown case {case!r}")
        cfg = cls(case, params)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def validate(self):
        p = self.params
        if not isinstance(p["trials"], int) or p["trials"] < 1:
            raise ConfigError("trials must be a positive integer")
        if not isinstance(p["max_iters"], int) or p["max_iters"] < 0:
            raise ConfigError("max_iters must be a nonnegative integer")
        if self.case == "coupling":
            if p["m"] > p["N"] * p["dims"]:
                raise ConfigError(f"m={p['m']} exceeds the strategy dimension "
                                  f"{p['N'] * p['dims']}; A cannot have full row rank")
            if p["m"] < 1:
                raise ConfigError("m must be positive")
        if self.case == "demand_response" and (p["N"] < 1 or p["T"] < 1):
            raise ConfigError("N and T must be positive")

    def to_dict(self):
        return copy.deepcopy(self.params)

    def config_hash(self):
        """Digest of the result-relevant keys; worker counts are left out."""
        doc = {k: v for k, v in self.params.items() if k not in EXECUTION_KEYS}
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @property
    def algorithm(self):
        return "TRADES-C" if self._uses_coupling() else "TRADES"

    def _uses_coupling(self):
        if self.case == "coupling":
            return True
        if self.case == "custom":
            return "rho" in self.params["algorithm"]
        return False


def _as_config(config):
    return config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)


def trial_seeds(seed, trials):
    """Independent per-trial seed sequences; trial ``k`` depends only on ``(seed, k)``."""
    return np.random.SeedSequence(seed).spawn(trials)


def gen_demand_response(config, trial_seed):
    """Random demand-response instance: ``(game, network, x0)``.

    Loads whose feasible set turns out empty are redrawn individually.
    """
    cfg = _as_config(config)
    p = cfg.params
    rng = np.random.default_rng(trial_seed)
    D = p["draws"]
    N, T = p["N"], p["T"]

    def u(key, size=None):
        lo, hi = D[key]
        return rng.uniform(lo, hi, size)

    lam = float(u("lam"))
    p0 = u("p0", T)
    rho, u_hat, loads = [], [], []
    for i in range(N):
        for _ in range(p["max_redraws"]):
            uh = u("u_hat", T)
            load = DemandResponseLoad(float(u("a")), float(u("b")), float(u("s1")),
                                      float(uh.sum()), T, tuple(p["u_bounds"]),
                                      tuple(p["s_bounds"]))
            if is_nonempty(load.feasible_set(), T):
                break
        else:
            raise InfeasibleSetError(f"load {i}: no feasible draw in {p['max_redraws']} tries")
        rho.append(float(u("rho")))
        u_hat.append(uh)
        loads.append(load)
    game = DemandResponseGame(rho, np.array(u_hat), lam, p0, loads=loads)
    net_seed = int(rng.integers(2 ** 32))
    network = network_from_dict({**p["graph"], "seed": net_seed}, N=N)
    x0 = u("x0", N * T)
    return game, network, x0


def gen_coupling(config, trial_seed):
    """Random coupled instance: ``(game, network, x0, lam0)``.

    ``A`` is redrawn until ``A A^T`` is well conditioned enough to count as
    full row rank.
    """
    cfg = _as_config(config)
    p = cfg.params
    rng = np.random.default_rng(trial_seed)
    D = p["draws"]
    N, n, m = p["N"], p["dims"], p["m"]

    def u(key, size=None):
        lo, hi = D[key]
        return rng.uniform(lo, hi, size)

    P = u("p", (N, n))
    w = float(u("w"))
    for _ in range(p["max_redraws"]):
        A = u("A", (N, m, n))
        b = u("b", (N, m))
        game = DeviationTrackingGame(P, w, A=A, b=b)
        if coupling_rank_margin(game) > 1e-10:
            break
    else:
        raise AssumptionViolationError("no full-row-rank coupling matrix drawn")
    network = network_from_dict(p["graph"], N=N)
    x0 = u("x0", N * n)
    lam0 = u("lam0", (N, m))
    return game, network, x0, lam0


def gen_custom(config, trial_seed):
    cfg = _as_config(config)
    p = cfg.params
    rng = np.random.default_rng(trial_seed)
    game = game_from_dict(p["game"])
    network = network_from_dict(p["network"], N=game.N, seed=int(rng.integers(2 ** 32)))
    x0 = np.asarray(p["x0"], dtype=float) if "x0" in p else np.zeros(game.n)
    lam0 = np.asarray(p["lam0"], dtype=float) if "lam0" in p else None
    return game, network, x0, lam0


def generate(config, trial_seed):
    """Instance for any case as ``(game, network, x0, lam0)``; ``lam0`` is None for TRADES."""
    cfg = _as_config(config)
    if cfg.case == "demand_response":
        return (*gen_demand_response(cfg, trial_seed), None)
    if cfg.case == "coupling":
        return gen_coupling(cfg, trial_seed)
    return gen_custom(cfg, trial_seed)


def solve_oracle(cfg, game):
    """``(x_star, lam_star, kkt_report)`` for the configured case."""
    tol = cfg.params["oracle"]["tol"]
    if cfg._uses_coupling():
        rho = cfg.params["algorithm"].get("rho", 0.1)
        x, lam, rep = solve_vgne(game, rho=rho, tol=tol or 1e-8)
        return x, lam, rep
    return solve_ne(game, tol=tol or 1e-10), None, None


def run_trial(cfg, k, seed_seq, out_dir=None, header=None):
    """Run one trial and return its summary record plus the error curve."""
    cfg = _as_config(cfg)
    p = cfg.params
    record = {"trial": k, "seed_key": list(seed_seq.spawn_key), "status": "ok"}
    t0 = time.perf_counter()
    try:
        game, network, x0, lam0 = generate(cfg, seed_seq)
        x_star, lam_star, rep = solve_oracle(cfg, game)
        record["oracle_seconds"] = time.perf_counter() - t0
        if rep is not None:
            record["oracle_kkt"] = rep.to_dict()
            record["lambda_star"] = lam_star.tolist()
        alg = p["algorithm"]
        tol = p["tol"] if p["tol"] is not None else float("inf")
        if cfg._uses_coupling():
            est = trades_c.TRADESC(delta=alg["delta"], rho=alg["rho"], max_iters=p["max_iters"],
                                   tol=tol, n_workers=p["n_workers"])
            est.fit(game, network, x0=x0, lam0=lam0, x_star=x_star)
            final = kkt_residual(game, est.x_, est.lambda_bar_, alg["rho"])
            record["final_kkt"] = final.to_dict()
        else:
            est = trades.TRADES(delta=alg["delta"], gamma=alg["gamma"], max_iters=p["max_iters"],
                                tol=tol, n_workers=p["n_workers"])
            est.fit(game, network, x0=x0, x_star=x_star)
        trace = est.trace_
    except (DivergenceError, NoConvergenceError, SafeguardViolationError,
            InfeasibleSetError) as exc:
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        return record, None
    err = trace["err_to_oracle"]
    record["n_iter"] = int(trace["iter"][-1])
    record["final_err"] = float(err[-1])
    rp = p["rate"]
    try:
        record["rate"] = fit_qlinear_rate(err, burn_in=min(rp["burn_in"], max(len(err) - 2, 0)),
                                          floor=rp["floor"]).to_dict()
    except ValueError as exc:
        record["rate"] = {"error": str(exc)}
    wall = trace["wall_ns"][1 + WARMUP_ITERS:]
    if wall.size:
        record["wall_ns_per_iter"] = {"median": float(np.median(wall)),
                                      "mean": float(wall.mean()), "std": float(wall.std())}
    record["total_seconds"] = time.perf_counter() - t0
    if out_dir is not None:
        name = f"trial_{k:03d}.csv"
        trace.to_csv(os.path.join(out_dir, name), header=(header or []) + [f"trial {k}"],
                     extra={"trial": k})
        record["csv"] = name
    return record, err


def _run_trial_job(args):
    return run_trial(*args)


def curve_stats(curves):
    """Per-iteration mean and population std of error curves.

    Shorter curves are extended with their last value.
    """
    if not curves:
        return {"iter": [], "mean": [], "std": []}
    L = max(len(c) for c in curves)
    M = np.array([np.concatenate([c, np.full(L - len(c), c[-1])]) for c in curves])
    return {"iter": list(range(L)), "mean": M.mean(axis=0).tolist(),
            "std": M.std(axis=0).tolist()}


def run_monte_carlo(config, out_dir=None, processes=None, order=None):
    """Run every trial, write trace CSVs and ``summary.json`` into ``out_dir``.

    Parameters
    ----------
    config : dict or ExperimentConfig
    out_dir : str, optional
        Nothing is written when omitted.
    processes : int, optional
        Worker processes; overrides the config value.
    order : sequence of int, optional
        Execution order of the trials (results do not depend on it).

    Returns
    -------
    dict
        The summary document.
    """
    cfg = _as_config(config)
    p = cfg.params
    seeds = trial_seeds(p["seed"], p["trials"])
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
    header = [f"schema {SCHEMA}", f"config_hash {cfg.config_hash()}", f"case {cfg.case}",
              f"algorithm {cfg.algorithm}"]
    order = list(range(p["trials"])) if order is None else list(order)
    if sorted(order) != list(range(p["trials"])):
        raise ConfigError("order must be a permutation of the trial indices")
    jobs = [(cfg, k, seeds[k], out_dir, header) for k in order]
    nproc = processes if processes is not None else p.get("processes", 1)
    if nproc and nproc > 1:
        with ProcessPoolExecutor(nproc) as pool:
            results = list(pool.map(_run_trial_job, jobs))
    else:
        results = [run_trial(*j) for j in jobs]
    results = sorted(results, key=lambda rc: rc[0]["trial"])
    records = [r for r, _ in results]
    curves = [c for _, c in results if c is not None]
    summary = {"schema": SCHEMA, "case": cfg.case, "algorithm": cfg.algorithm,
               "config": cfg.to_dict(), "config_hash": cfg.config_hash(),
               "n_trials": p["trials"], "n_failed": sum(r["status"] != "ok" for r in records),
               "curve": curve_stats(curves), "std_ddof": 0, "trials": records}
    if out_dir is not None:
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=1)
    return summary


def summary_from_csvs(out_dir, summary=None):
    """Recompute the mean/std curve from the CSVs listed in a summary."""
    if summary is None:
        with open(os.path.join(out_dir, "summary.json")) as fh:
            summary = json.load(fh)
    curves = []
    for rec in summary["trials"]:
        if rec.get("csv"):
            cols, arr, _ = read_csv(os.path.join(out_dir, rec["csv"]))
            curves.append(arr[:, cols.index("err_to_oracle")])
    return curve_stats(curves)


def deterministic_text(path):
    """CSV content without timing columns, for reproducibility checks."""
    cols, arr, header = read_csv(path)
    keep = [i for i, c in enumerate(cols) if c not in TIMING_COLUMNS]
    lines = header + [",".join(cols[i] for i in keep)]
    with open(path) as fh:
        body = [ln for ln in fh.read().splitlines() if ln and not ln.startswith("#")][1:]
    for ln in body:
        parts = ln.split(",")
        lines.append(",".join(parts[i] for i in keep))
    return "\n".join(lines) + "\n"


_PLOT_TEMPLATE = '''"""Semilog error bands rendered from Monte Carlo trace CSVs."""
# {warning}
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
RUNS = {runs!r}


def load(directory, files, column="err_to_oracle"):
    curves = []
    for name in files:
        with open(os.path.join(HERE, directory, name)) as fh:
            rows = [r for r in fh if not r.startswith("#")]
        reader = csv.DictReader(rows)
        curves.append(np.array([float(r[column]) for r in reader]))
    if not curves:
        return None
    L = max(len(c) for c in curves)
    return np.array([np.concatenate([c, np.full(L - len(c), c[-1])]) for c in curves])


fig, ax = plt.subplots(figsize=(6, 4))
for label, directory, files in RUNS:
    M = load(directory, files)
    if M is None:
        continue
    t = np.arange(M.shape[1])
    mean, std = M.mean(axis=0), M.std(axis=0)
    ax.semilogy(t, mean, label=label)
    ax.fill_between(t, np.maximum(mean - std, mean * 1e-3), mean + std, alpha=0.3)
ax.set_xlabel("iteration")
ax.set_ylabel("normalized distance to equilibrium")
if RUNS:
    ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, "error_band.png"), dpi=150)
'''


def emit_plot_script(summaries, out_path, labels=None, run_dirs=None):
    """Write a matplotlib script that draws mean +/- one std bands from the trace CSVs.

    Parameters
    ----------
    summaries : dict or list of dict
        One summary per algorithm/run to overlay.
    out_path : str
        Script path. CSV locations are stored relative to it.
    run_dirs : list of str, optional
        Directory holding each summary's CSVs; defaults to the script's
        directory.

    Raises
    ------
    FileNotFoundError
        If a CSV referenced by a summary does not exist.
    """
    if isinstance(summaries, dict):
        summaries = [summaries]
    base = os.path.dirname(os.path.abspath(out_path))
    run_dirs = run_dirs or [base] * len(summaries)
    labels = labels or [f"{s.get('algorithm', 'run')} ({s.get('case', '')})" for s in summaries]
    runs = []
    for s, d, lab in zip(summaries, run_dirs, labels):
        files = [r["csv"] for r in s.get("trials", []) if r.get("csv")]
        for f in files:
            if not os.path.exists(os.path.join(d, f)):
                raise FileNotFoundError(os.path.join(d, f))
        runs.append((lab, os.path.relpath(d, base), files))
    warning = ("no successful trials: the plot will be empty"
               if not any(r[2] for r in runs) else "generated by aggnash")
    text = _PLOT_TEMPLATE.format(runs=runs, warning=warning)
    with open(out_path, "w") as fh:
        fh.write(text)
    return out_path
