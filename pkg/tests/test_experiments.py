import json
import os
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from aggnash import ExperimentConfig, run_monte_carlo
from aggnash.exceptions import ConfigError
from aggnash.experiments import (deterministic_text, emit_plot_script, gen_coupling,
                                 gen_demand_response, summary_from_csvs, trial_seeds)

SMALL_DR = {"case": "demand_response", "N": 3, "T": 4, "trials": 3, "max_iters": 150,
            "seed": 5, "algorithm": {"delta": 0.5, "gamma": 0.05}}
SMALL_COUPLING = {"case": "coupling", "N": 4, "m": 2, "trials": 3, "max_iters": 150,
                  "seed": 9}


def csv_texts(out_dir, summary):
    return [deterministic_text(os.path.join(out_dir, r["csv"])) for r in summary["trials"]]


def test_demand_response_defaults():
    cfg = ExperimentConfig.from_dict({"case": "demand_response"})
    game, net, x0 = gen_demand_response(cfg, trial_seeds(0, 1)[0])
    assert game.N == 10 and game.n == 240 and game.agg_dim == 24
    assert net.report().valid and x0.shape == (240,)
    mc = game.monotonicity_constants()
    assert mc.mu > 0
    again = gen_demand_response(cfg, trial_seeds(0, 1)[0])
    np.testing.assert_array_equal(again[2], x0)
    np.testing.assert_array_equal(again[1].W, net.W)


def test_coupling_defaults():
    cfg = ExperimentConfig.from_dict({"case": "coupling"})
    game, net, x0, lam0 = gen_coupling(cfg, trial_seeds(0, 1)[0])
    assert game.N == 20 and game.n == 40 and game.m == 3
    assert np.linalg.svd(game.A, compute_uv=False)[-1] > 0
    assert np.all(lam0 >= 0) and net.report().valid
    again = gen_coupling(cfg, trial_seeds(0, 1)[0])[0]
    np.testing.assert_array_equal(again.A, game.A)
    np.testing.assert_array_equal(again.b, game.b)


def test_config_validation():
    with pytest.raises(ConfigError, match="full row rank"):
        ExperimentConfig.from_dict({"case": "coupling", "N": 2, "dims": 1, "m": 3})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"case": "coupling", "trials": 0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"case": "unknown"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"case": "custom"})


@pytest.mark.parametrize("doc", [SMALL_DR, SMALL_COUPLING], ids=["dr", "coupling"])
def test_determinism_and_order(doc, tmp_path):
    a = run_monte_carlo(doc, tmp_path / "a")
    b = run_monte_carlo(doc, tmp_path / "b", order=[2, 0, 1])
    assert csv_texts(tmp_path / "a", a) == csv_texts(tmp_path / "b", b)
    assert a["curve"] == b["curve"]
    assert a["n_failed"] == 0


def test_summary_matches_independent_reader(tmp_path):
    summary = run_monte_carlo(SMALL_COUPLING, tmp_path)
    curves = []
    for rec in summary["trials"]:
        df = pd.read_csv(tmp_path / rec["csv"], comment="#")
        curves.append(df["err_to_oracle"].to_numpy())
    M = pd.DataFrame(np.array(curves))
    np.testing.assert_allclose(summary["curve"]["mean"], M.mean(axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(summary["curve"]["std"], M.std(axis=0, ddof=0), rtol=0,
                               atol=1e-12)
    assert summary_from_csvs(tmp_path)["mean"] == pytest.approx(summary["curve"]["mean"],
                                                                abs=1e-12)
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["config_hash"] == summary["config_hash"]
    for rec in summary["trials"]:
        assert {"r", "slope", "window"} <= set(rec["rate"])
        assert "median" in rec["wall_ns_per_iter"]


def test_zero_iterations(tmp_path):
    summary = run_monte_carlo({**SMALL_DR, "trials": 1, "max_iters": 0}, tmp_path)
    assert len(summary["curve"]["mean"]) == 1
    assert summary["trials"][0]["n_iter"] == 0
    assert summary["curve"]["mean"][0] > 0


def test_plot_script(tmp_path):
    dr = run_monte_carlo(SMALL_DR, tmp_path / "dr")
    cp = run_monte_carlo(SMALL_COUPLING, tmp_path / "cp")
    script = tmp_path / "plot.py"
    emit_plot_script([dr, cp], script, run_dirs=[tmp_path / "dr", tmp_path / "cp"])
    text = script.read_text()
    assert "TRADES-C" in text and "fill_between" in text
    subprocess.run([sys.executable, str(script)], check=True)
    assert (tmp_path / "error_band.png").stat().st_size > 0


def test_plot_script_empty_and_missing(tmp_path):
    empty = {"algorithm": "TRADES", "case": "demand_response", "trials": []}
    path = emit_plot_script(empty, tmp_path / "plot.py")
    assert "# no successful trials" in open(path).read()
    missing = {"trials": [{"csv": "trial_000.csv"}]}
    with pytest.raises(FileNotFoundError):
        emit_plot_script(missing, tmp_path / "plot2.py")
