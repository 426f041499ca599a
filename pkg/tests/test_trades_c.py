import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from aggnash import (TRADESC, Box, DeviationTrackingGame, build_complete, build_erdos_renyi,
                     build_ring, from_weights, kkt_residual, solve_vgne)
from aggnash import trades_c
from aggnash.exceptions import (AssumptionViolationError, SafeguardViolationError,
                                UnsupportedOperationError)
from aggnash.oracles import sp_diagnostics
from aggnash.trades_c import TradesCState, g_lambda, g_x, grad_h, h_penalty

from conftest import scalar_game

HALF = np.array([[0.75, 0.25], [0.25, 0.75]])


def coupled_instance(seed=0, N=4, m=2):
    rng = np.random.default_rng(seed)
    g = DeviationTrackingGame(rng.uniform(0, 10, (N, 2)), 0.5, A=rng.uniform(0, 1, (N, m, 2)),
                              b=rng.uniform(0, 3, (N, m)))
    return g, rng


def traces_equal(a, b):
    cols = [c for c in a.columns if c != "wall_ns"]
    return np.array_equal(np.array([a[c] for c in cols]), np.array([b[c] for c in cols]),
                          equal_nan=True)


class TestPenalty:
    def test_active_branch(self):
        assert h_penalty([2.0], [1.0], 1.0) == 4.0
        k, gl = grad_h([2.0], [1.0], 1.0)
        assert k[0] == 3.0 and gl[0] == 2.0

    def test_inactive_branch(self):
        assert h_penalty([-2.0], [1.0], 1.0) == -0.5
        k, gl = grad_h([-2.0], [1.0], 1.0)
        assert k[0] == 0.0 and gl[0] == -1.0

    def test_zero_multiplier_zero_residual(self):
        assert h_penalty([0.0], [0.0], 0.3) == 0.0
        k, gl = grad_h([-1.0], [0.0], 0.3)
        assert k[0] == 0.0 and gl[0] == 0.0

    @given(st.integers(0, 10_000))
    def test_gradients_match_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        a, lam, rho = rng.normal(size=3), rng.uniform(0, 2, 3), rng.uniform(0.1, 2)
        # skip points too close to the kink rho a + lam = 0
        if np.min(np.abs(rho * a + lam)) < 1e-3:
            return
        h = 1e-6
        ka, kl = grad_h(a, lam, rho)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            da = (h_penalty(a + e, lam, rho) - h_penalty(a - e, lam, rho)) / (2 * h)
            dl = (h_penalty(a, lam + e, rho) - h_penalty(a, lam - e, rho)) / (2 * h)
            assert da == pytest.approx(ka[j], abs=1e-6)
            assert dl == pytest.approx(kl[j], abs=1e-6)

    def test_consensus_operators(self):
        np.testing.assert_array_equal(g_x(np.array([[3.0]]), [-2.0], [1.0], 1.0), [0.0])
        np.testing.assert_array_equal(g_lambda([-2.0], [1.0], 1.0), [-1.0])
        A = np.array([[1.0, 2.0], [0.5, -1.0]])
        np.testing.assert_allclose(g_x(A, [0.0, 0.0], [2.0, 3.0], 0.5), A.T @ [2.0, 3.0])
        np.testing.assert_allclose(g_lambda([1.0, 1.0], [2.0, 3.0], 0.5), [1.0, 1.0])


class TestRound:
    def test_hand_round(self):
        g = scalar_game(A=[[1.0]], b=[1.0])
        st0 = trades_c.init(g, from_weights(HALF), x0=[1.0, 3.0], lam0=[[0.5], [0.2]],
                            delta=0.05, rho=0.1)
        new = trades_c.step(st0, g, from_weights(HALF))
        np.testing.assert_allclose(new.x, [0.85, 2.595], atol=1e-15)
        np.testing.assert_allclose(new.lam.ravel(), [0.425, 0.475], atol=1e-15)
        np.testing.assert_allclose(new.z.astype(float).ravel(), [0.5, -0.5], atol=1e-15)
        np.testing.assert_allclose(new.y.astype(float).ravel(), [1.0, -1.0], atol=1e-15)

    def test_inactive_agent_with_silent_neighbors(self):
        # K_i = 0 and neighbors hold lam = 0, so lam_i+ = (w_ii - delta / rho) lam_i
        g = scalar_game(A=[[1.0]], b=[10.0])
        net = from_weights(HALF)
        s0 = trades_c.init(g, net, x0=[0.0, 0.0], lam0=[[0.5], [0.0]], delta=0.05, rho=0.1)
        new = trades_c.step(s0, g, net)
        assert new.lam[0, 0] == pytest.approx((0.75 - 0.5) * 0.5, abs=1e-16)

    def test_single_agent_is_centralized(self, rng):
        g = DeviationTrackingGame([[2.0, -1.0]], 0.5, A=[rng.uniform(size=(2, 2))],
                                  b=[[0.3, 0.1]])
        net = build_complete(1)
        state = trades_c.init(g, net, x0=[0.5, 0.5], lam0=[0.2, 0.0], delta=0.05, rho=0.1)
        x, lam = state.x.copy(), state.lam[0].copy()
        for _ in range(50):
            state = trades_c.step(state, g, net)
            x, lam = trades_c.centralized_pd_step(g, x, lam, 0.05, 0.1)
            np.testing.assert_allclose(state.x, x, rtol=0, atol=1e-14)
            np.testing.assert_allclose(state.lam[0], lam, rtol=0, atol=1e-14)

    def test_one_dimensional_solution(self):
        g = DeviationTrackingGame([[2.0]], 0.5, A=[[[1.0]]], b=[[1.0]])
        est = TRADESC(delta=0.05, rho=0.1, max_iters=20_000, tol=1e-12).fit(g, build_complete(1))
        assert est.x_[0] == pytest.approx(1.0, abs=1e-8)
        assert est.lambda_bar_[0] == pytest.approx(1.0, abs=1e-8)


class TestInit:
    def test_safeguard_rejected(self):
        g, _ = coupled_instance()
        with pytest.raises(AssumptionViolationError, match="self weights"):
            trades_c.init(g, build_ring(4, 0.5), delta=0.05, rho=0.1)

    def test_local_sets_rejected(self):
        g = scalar_game(A=[[1.0]], b=[1.0])
        for a in g.agents:
            object.__setattr__(a, "local_set", Box(0, 1, dim=1))
        with pytest.raises(AssumptionViolationError, match="local sets"):
            trades_c.init(g, from_weights(HALF))

    def test_no_coupling_unsupported(self):
        with pytest.raises(UnsupportedOperationError):
            trades_c.init(scalar_game(), from_weights(HALF))

    def test_negative_multiplier_rejected(self):
        with pytest.raises(AssumptionViolationError):
            trades_c.init(scalar_game(A=[[1.0]], b=[1.0]), from_weights(HALF), lam0=[-1.0])

    def test_runtime_safeguard(self):
        g = scalar_game(A=[[1.0]], b=[10.0])
        # bypass init to place the state outside the safe region
        state = TradesCState(x=np.zeros(2), lam=np.array([[1.0], [0.0]]),
                             z=np.zeros((2, 1), dtype=np.longdouble),
                             y=np.zeros((2, 1), dtype=np.longdouble), t=0, delta=0.5, rho=0.1)
        with pytest.raises(SafeguardViolationError):
            trades_c.step(state, g, from_weights(HALF))
        trades_c.step(state, g, from_weights(HALF), check_safeguard=False)


@given(st.integers(0, 10_000))
def test_tracker_means_and_dual_sign(seed):
    g, rng = coupled_instance(seed % 50, N=5)
    net = build_erdos_renyi(5, 0.6, seed=seed)
    delta = 0.5 * net.self_weights().min() * 0.1
    state = trades_c.init(g, net, x0=rng.uniform(0, 10, g.n), lam0=rng.uniform(0, 2, 2),
                          delta=delta, rho=0.1)
    for _ in range(30):
        state = trades_c.step(state, g, net)
        assert np.all(state.lam >= 0)
        assert np.max(np.abs(state.z.sum(axis=0))) <= 1e-12
        assert np.max(np.abs(state.y.sum(axis=0))) <= 1e-12


def test_frozen_strategies_trackers_decay():
    # a negligible step freezes x exactly, so each round is pure consensus
    g, rng = coupled_instance(3, N=6)
    net = build_ring(6, 0.6)
    state = trades_c.init(g, net, x0=rng.uniform(0, 10, g.n), lam0=rng.uniform(0, 2, (6, 2)),
                          delta=1e-300, rho=0.1)
    _, trace, _ = trades_c.run(state, g, net, max_iters=40, tol=float("inf"), record_states=True)
    np.testing.assert_array_equal(trace.states[-1].x, state.x)
    diag = sp_diagnostics(trace, net, g)
    s2 = net.contraction ** 2
    ratios = diag["tracking_energy"][1:] / diag["tracking_energy"][:-1]
    assert np.all(ratios <= s2 + 1e-9)
    cons = diag["constraint_tracking_energy"]
    assert np.all(cons[1:] <= s2 * cons[:-1] + 1e-9)
    dual = trace["dual_consensus_err"]
    assert np.all(dual[1:] <= net.contraction * dual[:-1] + 1e-12)


def test_converges_to_oracle():
    g, rng = coupled_instance()
    x, lam, _ = solve_vgne(g, rho=0.1, tol=1e-10)
    est = TRADESC(delta=0.05, rho=0.1, max_iters=20_000, tol=1e-12).fit(
        g, build_ring(4, 0.6), x0=rng.uniform(0, 10, g.n), lam0=np.ones(2), x_star=x)
    np.testing.assert_allclose(est.x_, x, atol=1e-8)
    np.testing.assert_allclose(est.lambda_bar_, lam, atol=1e-8)
    assert kkt_residual(g, est.x_, est.lambda_bar_, 0.1).certified(1e-8)
    assert np.all(est.lambda_ >= 0)


class TestEngineModes:
    def test_threaded_and_guarded_match_sequential(self):
        g, rng = coupled_instance(1, N=5)
        net = build_erdos_renyi(5, 0.5, seed=2)
        x0 = rng.uniform(0, 10, g.n)
        runs = [TRADESC(delta=0.02, rho=0.1, max_iters=60, tol=float("inf"), **kw)
                .fit(g, net, x0=x0, lam0=np.ones(2))
                for kw in ({"n_workers": 1}, {"n_workers": 3}, {"n_workers": 5},
                           {"guard_locality": True})]
        for est in runs[1:]:
            assert traces_equal(runs[0].trace_, est.trace_)
            np.testing.assert_array_equal(runs[0].x_, est.x_)
            np.testing.assert_array_equal(runs[0].lambda_, est.lambda_)

    def test_guard_reads_only_neighbors(self):
        g, rng = coupled_instance(1, N=5)
        net = build_erdos_renyi(5, 0.5, seed=2)
        est = TRADESC(delta=0.02, rho=0.1, max_iters=4, tol=float("inf"),
                      guard_locality=True).fit(g, net, x0=rng.uniform(0, 10, g.n))
        guard = est.locality_
        assert guard.violations == []
        assert {k for _, _, k in guard.reads} == {"lam", "z", "y", "phi", "c"}
        for reader, owner, _ in guard.reads:
            assert owner == reader or owner in net.in_neighbors[reader]
        assert len(guard.reads) == 4 * sum(5 * len(nb) for nb in net.in_neighbors)


def test_estimator_api():
    est = TRADESC(delta=0.01, max_iters=10)
    twin = clone(est).set_params(max_iters=3)
    g, _ = coupled_instance()
    twin.fit(g, build_ring(4, 0.6))
    assert twin.n_iter_ == 3 and twin.lambda_.shape == (4, 2) and len(twin.trace_) == 4
    assert not hasattr(est, "x_")
