"""Distributed v-GNE seeking under affine coupling constraints (TRADES-C).

Coupling constraints ``sum_i (A_i x_i - b_i) <= 0`` enter through the
augmented Lagrangian penalty

    H(a, lam) = sum_l  a_l lam_l + rho a_l^2 / 2   if rho a_l + lam_l >= 0
                       -lam_l^2 / (2 rho)          otherwise.

Each agent keeps a local multiplier ``lam_i``, the aggregate tracker ``z_i``
and a constraint tracker ``y_i`` so that ``N (A_i x_i - b_i) + y_i``
estimates ``Ax - b``. The multiplier update needs no projection: it stays
nonnegative as long as ``w_ii > delta / rho``.
"""

import math
import time
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from ._engine import (TRACKER_DTYPE, LocalityGuard, RoundScheduler, check_network, guarded_mix,
                      is_diverged)
from ._validation import check_nonnegative, check_step, check_stop
from .exceptions import (AssumptionViolationError, DivergenceError, SafeguardViolationError,
                         UnsupportedOperationError)
from .projections import Free
from .trace import Trace, column_sums, exact_column_sums
from .trades import _norm

TRACE_COLUMNS = ("iter", "err_to_oracle", "step_norm", "tracking_err_max", "mean_z_norm",
                 "cons_violation_inf", "dual_consensus_err", "kkt_primal_res", "kkt_dual_res",
                 "lambda_min", "mean_y_norm", "wall_ns")

SAFEGUARD_TOL = 1e-12


def h_penalty(a, lam, rho):
    """Augmented Lagrangian penalty ``sum_l H_l(a_l, lam_l)``."""
    a = np.asarray(a, dtype=float)
    lam = np.asarray(lam, dtype=float)
    active = rho * a + lam >= 0
    vals = np.where(active, a * lam + 0.5 * rho * a ** 2, -lam ** 2 / (2 * rho))
    return float(np.sum(vals))


def grad_h(a, lam, rho):
    """Gradients ``(max(rho a + lam, 0), (max(rho a + lam, 0) - lam) / rho)``."""
    a = np.asarray(a, dtype=float)
    lam = np.asarray(lam, dtype=float)
    k = np.maximum(rho * a + lam, 0.0)
    return k, (k - lam) / rho


def g_x(A_i, s1, s2, rho):
    """``sum_l max(rho s1_l + s2_l, 0) A_i[l]^T``."""
    return np.atleast_2d(A_i).T @ np.maximum(rho * np.asarray(s1) + np.asarray(s2), 0.0)


def g_lambda(s1, s2, rho):
    """``(max(rho s1 + s2, 0) - s2) / rho``."""
    s2 = np.asarray(s2, dtype=float)
    return (np.maximum(rho * np.asarray(s1) + s2, 0.0) - s2) / rho


@dataclass
class TradesCState:
    """Engine state: strategies, local multipliers and both trackers."""

    x: np.ndarray
    lam: np.ndarray
    z: np.ndarray
    y: np.ndarray
    t: int
    delta: float
    rho: float

    def copy(self):
        return replace(self, x=self.x.copy(), lam=self.lam.copy(), z=self.z.copy(),
                       y=self.y.copy())


def init(game, network, x0=None, lam0=None, delta=0.05, rho=0.1):
    """Initial state with ``z = y = 0``.

    Raises
    ------
    AssumptionViolationError
        If some ``w_ii <= delta / rho``, local sets are present, or
        ``lam0`` has a negative entry.
    UnsupportedOperationError
        If the game has no coupling rows.
    """
    delta = check_step(delta, "delta")
    rho = check_step(rho, "rho")
    if game.m == 0:
        raise UnsupportedOperationError("TRADES-C needs coupling constraints (m > 0)")
    if any(s is not None and not isinstance(s, Free) for s in game.local_sets):
        raise AssumptionViolationError(
            "TRADES-C handles coupling constraints only; drop the local sets or use TRADES")
    check_network(game, network)
    wii = network.self_weights()
    bad = np.flatnonzero(wii <= delta / rho)
    if bad.size:
        raise AssumptionViolationError(
            f"self weights of agents {bad.tolist()} do not exceed delta/rho={delta / rho:g}; "
            "multipliers could turn negative")
    x = np.zeros(game.n) if x0 is None else game.check_profile(x0)
    if lam0 is None:
        lam = np.zeros((game.N, game.m))
    else:
        lam = np.array(np.broadcast_to(np.asarray(lam0, dtype=float), (game.N, game.m)))
    check_nonnegative(lam, "lam0")
    return TradesCState(x=x, lam=lam, z=np.zeros((game.N, game.agg_dim), dtype=TRACKER_DTYPE),
                        y=np.zeros((game.N, game.m), dtype=TRACKER_DTYPE), t=0, delta=delta,
                        rho=rho)


def _check_safeguard(lam, t):
    low = float(lam.min())
    if low < -SAFEGUARD_TOL:
        raise SafeguardViolationError(f"multiplier reached {low:.3e} at round {t}")


def step(state, game, network, scheduler=None, guard=None, check_safeguard=True):
    """One synchronous round; returns a new state."""
    if guard is not None:
        new = _guarded_step(state, game, network, guard)
    else:
        new = _step(state, game, network, scheduler or RoundScheduler(game.N))
    if check_safeguard:
        _check_safeguard(new.lam, new.t)
    return new


def _step(state, game, network, sched):
    x, lam, z, y = state.x, state.lam, state.z, state.y
    delta, rho, N = state.delta, state.rho, game.N
    d, m = game.agg_dim, game.m
    Phi = np.empty((N, d))
    C = np.empty((N, m))
    x_new, lam_new = np.empty_like(x), np.empty_like(lam)
    z_new, y_new = np.empty_like(z), np.empty_like(y)

    def publish(a, b):
        Phi[a:b] = game.phi_range(x, a, b)
        C[a:b] = N * game.local_residual_range(x, a, b)

    sched(publish)
    # message board, columns [z | y | phi | c | lam]
    board = np.hstack([z, y, Phi.astype(TRACKER_DTYPE), C.astype(TRACKER_DTYPE),
                       lam.astype(TRACKER_DTYPE)])
    P_ld, C_ld = board[:, d + m:2 * d + m], board[:, 2 * d + m:2 * d + 2 * m]
    S = (P_ld + z).astype(float)
    S1 = (C_ld + y).astype(float)

    def update(a, b):
        sl = game.layout.span(a, b)
        K = np.zeros((N, m))
        K[a:b] = np.maximum(rho * S1[a:b] + lam[a:b], 0.0)
        g = game.f_tilde_range(x, S, a, b)
        x_new[sl] = x[sl] - delta * g - delta * game.coupling_adjoint_range(K, a, b)
        mixed = network.mix(board, a, b)
        lam_new[a:b] = mixed[:, -m:] + delta * ((K[a:b] - lam[a:b]) / rho)
        z_new[a:b] = mixed[:, :d] + mixed[:, d + m:2 * d + m] - P_ld[a:b]
        y_new[a:b] = mixed[:, d:d + m] + mixed[:, 2 * d + m:2 * d + 2 * m] - C_ld[a:b]

    sched(update)
    return TradesCState(x=x_new, lam=lam_new, z=z_new, y=y_new, t=state.t + 1, delta=delta,
                        rho=rho)


def _guarded_step(state, game, network, guard):
    x, lam, z, y = state.x, state.lam, state.z, state.y
    delta, rho, N = state.delta, state.rho, game.N
    lay = game.layout
    mailbox = [{"lam": lam[j], "z": z[j], "y": y[j],
                "phi": game.phi_range(x, j, j + 1)[0].astype(TRACKER_DTYPE),
                "c": (N * game.local_residual_range(x, j, j + 1)[0]).astype(TRACKER_DTYPE)}
               for j in range(N)]
    x_new, lam_new = np.empty_like(x), np.empty_like(lam)
    z_new, y_new = np.empty_like(z), np.empty_like(y)
    for i in range(N):
        own = mailbox[i]
        K = np.zeros((N, game.m))
        K[i] = np.maximum(rho * (own["c"] + own["y"]).astype(float) + own["lam"], 0.0)
        S = np.zeros((N, game.agg_dim))
        S[i] = (own["phi"] + own["z"]).astype(float)
        g = game.f_tilde_range(x, S, i, i + 1)
        sl = lay.span(i, i + 1)
        x_new[sl] = x[sl] - delta * g - delta * game.coupling_adjoint_range(K, i, i + 1)
        lam_new[i] = guarded_mix(guard, mailbox, network, i, "lam") \
            + delta * ((K[i] - own["lam"]) / rho)
        z_new[i] = guarded_mix(guard, mailbox, network, i, "z") \
            + guarded_mix(guard, mailbox, network, i, "phi") - own["phi"]
        y_new[i] = guarded_mix(guard, mailbox, network, i, "y") \
            + guarded_mix(guard, mailbox, network, i, "c") - own["c"]
    return TradesCState(x=x_new, lam=lam_new, z=z_new, y=y_new, t=state.t + 1, delta=delta,
                        rho=rho)


def centralized_pd_step(game, x, lam, delta, rho):
    """Augmented primal-dual step with exact ``Ax - b``.

    ``x+ = x - delta F(x) - delta A^T max(rho (Ax - b) + lam, 0)`` and
    ``lam+ = lam + delta * grad_lam H(Ax - b, lam)``.
    """
    x = game.check_profile(x)
    lam = np.asarray(lam, dtype=float)
    K = np.maximum(rho * game.coupling_residual(x) + lam, 0.0)
    adj = game.coupling_adjoint_range(np.broadcast_to(K, (game.N, game.m)), 0, game.N)
    x_new = x - delta * game.pseudo_gradient(x) - delta * adj
    lam_new = lam + delta * ((K - lam) / rho)
    return x_new, lam_new


def kkt_parts(game, x, lam, rho, F=None):
    """``(||F + grad_x H||, ||grad_lam H||, ||max(Ax - b, 0)||_inf)`` at ``(x, lam)``."""
    c = game.coupling_residual(x)
    K, g_lam = grad_h(c, lam, rho)
    adj = game.coupling_adjoint_range(np.broadcast_to(K, (game.N, game.m)), 0, game.N)
    F = game.pseudo_gradient(x) if F is None else F
    primal = float(np.linalg.norm(F + adj))
    return primal, float(np.linalg.norm(g_lam)), float(max(0.0, np.max(c)))


def _metrics(game, state, rho, x_star, x_prev, x_star_norm):
    x, lam, z, y, N = state.x, state.lam, state.z, state.y, game.N
    P = game.phi(x)
    sig = (column_sums(P) / N).astype(float)
    F = game.f_tilde_range(x, np.broadcast_to(sig, (N, game.agg_dim)), 0, N)
    c = game.local_residual_range(x, 0, N).sum(axis=0)
    lam_bar = (column_sums(lam) / N).astype(float)
    K = np.maximum(rho * c + lam_bar, 0.0)
    adj = game.coupling_adjoint_range(np.broadcast_to(K, (N, game.m)), 0, N)
    D = (P + z - sig).astype(float)
    return {"iter": state.t,
            "err_to_oracle": np.nan if x_star is None else _norm(x - x_star) / x_star_norm,
            "step_norm": np.nan if x_prev is None else _norm(x - x_prev),
            "tracking_err_max": math.sqrt(float(np.max(np.einsum("ij,ij->i", D, D)))),
            "mean_z_norm": float(np.max(np.abs(column_sums(z)))),
            "cons_violation_inf": max(0.0, float(np.max(c))),
            "dual_consensus_err": _norm(lam - lam_bar),
            "kkt_primal_res": _norm(F + adj),
            "kkt_dual_res": _norm((K - lam_bar) / rho),
            "lambda_min": float(lam.min()),
            "mean_y_norm": float(np.max(np.abs(column_sums(y))))}


def run(state, game, network, max_iters=10_000, tol=1e-10, x_star=None, n_workers=None,
        guard_locality=False, record_states=False, check_safeguard=True):
    """Iterate :func:`step`; same stopping and trace conventions as :func:`aggnash.trades.run`.

    The stopping test also requires the multiplier change to be small:
    ``max(||x+ - x||, ||lam+ - lam||) / delta <= tol``.
    """
    max_iters, tol = check_stop(max_iters, tol)
    guard = LocalityGuard(network, ("lam", "z", "y", "phi", "c")) if guard_locality else None
    trace = Trace(TRACE_COLUMNS, record_states=record_states)
    rho = state.rho
    x_star_norm = 1.0
    if x_star is not None:
        x_star = game.check_profile(x_star)
        x_star_norm = _norm(x_star) or 1.0
    trace.append({**_metrics(game, state, rho, x_star, None, x_star_norm), "wall_ns": 0},
                 state.copy() if record_states else None)
    with RoundScheduler(game.N, n_workers) as sched:
        for _ in range(max_iters):
            t0 = time.perf_counter_ns()
            new = step(state, game, network, scheduler=sched, guard=guard,
                       check_safeguard=check_safeguard)
            wall = time.perf_counter_ns() - t0
            if is_diverged(new.x, new.lam, new.z, new.y):
                raise DivergenceError(f"iterates diverged at round {new.t}",
                                      last_state=state, iteration=new.t, trace=trace)
            row = _metrics(game, new, rho, x_star, state.x, x_star_norm)
            trace.append({**row, "wall_ns": wall}, new.copy() if record_states else None)
            moved = max(_norm(new.x - state.x), _norm(new.lam - state.lam)) / state.delta
            state = new
            if math.isfinite(tol) and moved <= tol:
                break
    return state, trace, guard


class TRADESC(BaseEstimator):
    """Distributed v-GNE seeking for aggregative games with affine coupling constraints.

    Parameters
    ----------
    delta : float, default=0.05
    rho : float, default=0.1
        Penalty parameter. Every self weight must exceed ``delta / rho``.
    max_iters : int, default=10000
    tol : float, default=1e-10
    n_workers : int, optional
    guard_locality : bool, default=False
    record_states : bool, default=False
    check_safeguard : bool, default=True
        Raise :class:`~aggnash.exceptions.SafeguardViolationError` as soon as a
        multiplier falls below ``-1e-12``.

    Attributes
    ----------
    x_ : ndarray
    lambda_ : ndarray of shape (N, m)
        Local multipliers.
    lambda_bar_ : ndarray of shape (m,)
        Their average.
    state_ : TradesCState
    n_iter_ : int
    trace_ : Trace
    locality_ : LocalityGuard or None
    """

    def __init__(self, delta=0.05, rho=0.1, max_iters=10_000, tol=1e-10, n_workers=None,
                 guard_locality=False, record_states=False, check_safeguard=True):
        self.delta = delta
        self.rho = rho
        self.max_iters = max_iters
        self.tol = tol
        self.n_workers = n_workers
        self.guard_locality = guard_locality
        self.record_states = record_states
        self.check_safeguard = check_safeguard

    def fit(self, game, network, x0=None, lam0=None, x_star=None):
        state = init(game, network, x0, lam0, self.delta, self.rho)
        state, trace, guard = run(state, game, network, self.max_iters, self.tol, x_star=x_star,
                                  n_workers=self.n_workers, guard_locality=self.guard_locality,
                                  record_states=self.record_states,
                                  check_safeguard=self.check_safeguard)
        self.state_ = state
        self.x_ = state.x
        self.lambda_ = state.lam
        self.lambda_bar_ = exact_column_sums(state.lam) / game.N
        self.n_iter_ = state.t
        self.trace_ = trace
        self.locality_ = guard
        return self
