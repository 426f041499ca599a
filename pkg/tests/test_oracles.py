import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aggnash import (TRADES, Box, DeviationTrackingGame, Halfspace, QuadraticAggregativeGame,
                     build_complete, build_ring, fit_qlinear_rate, kkt_residual, solve_ne,
                     solve_vgne, sp_diagnostics)
from aggnash.exceptions import (AssumptionViolationError, NoConvergenceError,
                                UnsupportedOperationError)
from aggnash.experiments import ExperimentConfig, gen_coupling, trial_seeds
from aggnash.oracles import coupling_rank_margin, tracking_energy


def linear_solution(game):
    M, q = game.affine_form()
    return np.linalg.solve(M, -q)


class TestSolveNE:
    @pytest.mark.parametrize("seed", range(3))
    def test_unconstrained_quadratic_matches_linear_solve(self, seed):
        g = QuadraticAggregativeGame.random(4, 2, agg_dim=2, random_state=seed)
        np.testing.assert_allclose(solve_ne(g, tol=1e-12), linear_solution(g), atol=1e-10)

    def test_decoupled_game_is_per_agent_argmin(self, rng):
        P = rng.uniform(-3, 3, (5, 2))
        g = DeviationTrackingGame(P, 0.0)
        box = Box(-1, 1, dim=10)
        np.testing.assert_allclose(solve_ne(g, projection=box.project),
                                   np.clip(P, -1, 1).ravel(), atol=1e-9)

    def test_one_dimensional_halfline(self):
        g = DeviationTrackingGame([[2.0]], 0.5)
        x = solve_ne(g, projection=Halfspace([1.0], 1.0).project)
        assert x[0] == pytest.approx(1.0, abs=1e-12)

    def test_fixed_point_residual_and_restart(self):
        g = QuadraticAggregativeGame.random(5, 3, agg_dim=2, box=(-0.3, 0.3), random_state=4)
        mc = g.monotonicity_constants()
        gamma = mc.mu / mc.L ** 2
        x = solve_ne(g, tol=1e-10)
        assert np.linalg.norm(x - g.project(x - gamma * g.pseudo_gradient(x))) <= 1e-10
        np.testing.assert_allclose(solve_ne(g, tol=1e-10, x0=x), x, atol=1e-12)

    def test_errors(self):
        g = QuadraticAggregativeGame.random(3, 2, random_state=0)
        with pytest.raises(NoConvergenceError) as exc:
            solve_ne(g, max_iters=3, tol=0)
        assert exc.value.history.size == 3
        coupled = DeviationTrackingGame([[1.0]], 0.5, A=[[[1.0]]], b=[[0.0]])
        with pytest.raises(UnsupportedOperationError):
            solve_ne(coupled)


class TestSolveVGNE:
    def test_one_dimensional(self):
        g = DeviationTrackingGame([[2.0]], 0.5, A=[[[1.0]]], b=[[1.0]])
        x, lam, rep = solve_vgne(g, tol=1e-10)
        assert x[0] == pytest.approx(1.0, abs=1e-9)
        assert lam[0] == pytest.approx(1.0, abs=1e-9)
        assert rep.certified(1e-10)

    def test_slack_constraints(self, rng):
        P = rng.uniform(0, 1, (4, 2))
        A = rng.uniform(0, 1, (4, 2, 2))
        g = DeviationTrackingGame(P, 0.5, A=A, b=np.full((4, 2), 1e3))
        x, lam, _ = solve_vgne(g, tol=1e-10)
        np.testing.assert_array_equal(lam, 0.0)
        np.testing.assert_allclose(x, linear_solution(DeviationTrackingGame(P, 0.5)), atol=1e-9)

    def test_random_coupling_instance_certified(self):
        cfg = ExperimentConfig.from_dict({"case": "coupling", "trials": 1})
        g = gen_coupling(cfg, trial_seeds(0, 1)[0])[0]
        _, _, rep = solve_vgne(g, rho=0.1, tol=1e-8)
        assert rep.certified(1e-8)
        assert all(np.isfinite(v) for v in rep.to_dict().values())

    def test_start_invariance(self):
        rng = np.random.default_rng(7)
        g = DeviationTrackingGame(rng.uniform(0, 10, (6, 2)), 0.5,
                                  A=rng.uniform(0, 1, (6, 3, 2)), b=rng.uniform(0, 3, (6, 3)))
        ref, ref_lam, _ = solve_vgne(g, tol=1e-10)
        for _ in range(10):
            x, lam, _ = solve_vgne(g, tol=1e-10, x0=rng.uniform(-20, 20, g.n),
                                   lam0=rng.uniform(0, 5, 3))
            np.testing.assert_allclose(x, ref, atol=1e-6)
            np.testing.assert_allclose(lam, ref_lam, atol=1e-6)

    def test_rank_deficiency(self):
        A = np.ones((3, 2, 2))
        g = DeviationTrackingGame(np.zeros((3, 2)), 0.5, A=A, b=np.ones((3, 2)))
        assert coupling_rank_margin(g) <= 1e-12
        with pytest.raises(AssumptionViolationError, match="row rank"):
            solve_vgne(g)

    def test_uncoupled_unsupported(self):
        with pytest.raises(UnsupportedOperationError):
            solve_vgne(DeviationTrackingGame([[1.0]], 0.5))


@pytest.fixture(scope="module")
def solved():
    rng = np.random.default_rng(3)
    g = DeviationTrackingGame(rng.uniform(0, 10, (4, 2)), 0.5,
                              A=rng.uniform(0, 1, (4, 2, 2)), b=rng.uniform(0, 3, (4, 2)))
    x, lam, _ = solve_vgne(g, tol=1e-11)
    return g, x, lam


class TestKkt:
    def test_certified_pair(self, solved):
        g, x, lam = solved
        assert kkt_residual(g, x, lam, 0.1).certified(1e-10)

    def test_perturbation_grows_linearly(self, solved):
        g, x, lam = solved
        d = np.random.default_rng(0).normal(size=g.n)
        d /= np.linalg.norm(d)
        res = [kkt_residual(g, x + eps * d, lam, 0.1).primal_res for eps in (1e-2, 1e-3, 1e-4)]
        np.testing.assert_allclose(res[0] / res[1], 10, rtol=0.05)
        np.testing.assert_allclose(res[1] / res[2], 10, rtol=0.05)

    def test_negative_multiplier_still_reported(self, solved):
        g, x, lam = solved
        rep = kkt_residual(g, x, -np.abs(lam) - 1, 0.1)
        assert all(np.isfinite(v) and v >= 0 for v in rep.to_dict().values())
        assert not rep.certified()

    def test_uncoupled_unsupported(self):
        with pytest.raises(UnsupportedOperationError):
            kkt_residual(DeviationTrackingGame([[1.0]], 0.5), [0.0], [], 0.1)


class TestRateFit:
    def test_geometric(self):
        fit = fit_qlinear_rate(0.5 ** np.arange(60))
        assert abs(fit.r - 0.5) <= 1e-12
        assert fit.slope == pytest.approx(np.log(0.5), abs=1e-12)
        assert fit.a1 == pytest.approx(1.0, abs=1e-10)
        assert fit.qlinear and fit.window == (0, 59)

    @given(st.floats(0.05, 0.98), st.floats(1e-3, 1e3), st.integers(0, 20))
    def test_geometric_recovery(self, r, a, burn):
        e = a * r ** np.arange(200)
        e[:burn] *= 5
        fit = fit_qlinear_rate(e, burn_in=burn)
        assert abs(fit.r - r) <= 1e-12
        assert fit.window[0] == burn

    def test_harmonic_is_not_qlinear(self):
        t = np.arange(1, 2_000_001, dtype=float)
        fit = fit_qlinear_rate(1 / t)
        assert fit.r > 1 - 1e-6 and not fit.qlinear
        assert not fit_qlinear_rate(1 / t[:10_000], gap=1e-3).qlinear

    def test_window_truncated_at_zero_and_floor(self):
        fit = fit_qlinear_rate([1.0, 0.5, 0.25, 0.0, 0.1])
        assert fit.window == (0, 2) and fit.r == 0.5
        assert fit_qlinear_rate(0.5 ** np.arange(40), floor=1e-6).window == (0, 19)

    def test_rejects_short_window(self):
        with pytest.raises(ValueError):
            fit_qlinear_rate([1.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            fit_qlinear_rate([1.0, 0.5], burn_in=2)

    def test_trades_trace(self):
        g = QuadraticAggregativeGame.random(5, 2, agg_dim=2, random_state=1)
        gamma = 0.5 * g.monotonicity_constants().gamma_bound
        est = TRADES(delta=0.5, gamma=gamma, max_iters=5000, tol=1e-13).fit(
            g, build_ring(5, 0.5), x_star=linear_solution(g))
        fit = fit_qlinear_rate(est.trace_["err_to_oracle"], burn_in=20, floor=1e-11)
        assert 0 < fit.r < 1 and fit.slope < 0 and fit.qlinear


def complement_basis(N):
    # orthonormal basis of the complement of span{1}, built by QR
    M = np.column_stack([np.ones(N), np.random.default_rng(N).normal(size=(N, N - 1))])
    Q, _ = np.linalg.qr(M)
    return Q[:, 1:]


class TestDiagnostics:
    @pytest.mark.parametrize("N", [2, 3, 4, 6])
    def test_consensus_identity(self, N):
        g = QuadraticAggregativeGame.random(N, 2, agg_dim=2, random_state=N)
        gamma = 0.5 * g.monotonicity_constants().gamma_bound
        est = TRADES(delta=0.5, gamma=gamma, max_iters=30, tol=float("inf"),
                     record_states=True).fit(g, build_ring(N, 0.5) if N > 2 else build_complete(2),
                                             x0=np.random.default_rng(0).normal(size=g.n))
        diag = sp_diagnostics(est.trace_, None, g)
        U = complement_basis(N)
        for k, st_ in enumerate(est.trace_.states):
            z_perp = U.T @ st_.z.astype(float)
            h = -U.T @ g.phi(st_.x)
            assert diag["tracking_energy"][k] == pytest.approx(np.sum((z_perp - h) ** 2),
                                                               abs=1e-9)

    def test_zero_on_consensus_manifold(self, rng):
        g = QuadraticAggregativeGame.random(4, 2, agg_dim=3, random_state=0)
        x = rng.normal(size=g.n)
        P = g.phi(x)
        assert tracking_energy(g, x, P.mean(axis=0) - P) <= 1e-28

    def test_energy_envelope_along_run(self):
        g = QuadraticAggregativeGame.random(5, 2, agg_dim=2, random_state=2)
        gamma = 0.5 * g.monotonicity_constants().gamma_bound
        est = TRADES(delta=0.5, gamma=gamma, max_iters=600, tol=float("inf"),
                     record_states=True).fit(g, build_ring(5, 0.5),
                                             x0=np.random.default_rng(1).normal(size=g.n))
        energy = sp_diagnostics(est.trace_, None, g)["tracking_energy"]
        burn = 20
        fit = fit_qlinear_rate(energy, burn_in=burn, floor=1e-26)
        assert fit.slope < 0
        t = np.arange(burn, fit.window[1] + 1)
        envelope = fit.a1 * np.exp(fit.slope * t) * np.exp(3 * fit.residual + 1)
        assert np.all(energy[burn:fit.window[1] + 1] <= envelope)

    def test_requires_states(self):
        g = QuadraticAggregativeGame.random(3, 1, random_state=0)
        est = TRADES(delta=0.5, gamma=0.01, max_iters=3).fit(g, build_ring(3))
        with pytest.raises(UnsupportedOperationError):
            sp_diagnostics(est.trace_, None, g)
