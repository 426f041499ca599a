"""Distributed Nash equilibrium seeking with aggregate tracking (TRADES).

Each agent keeps its strategy ``x_i`` and a tracker ``z_i`` so that
``phi_i(x_i) + z_i`` estimates the aggregate. One synchronous round reads
only in-neighbor messages ``{z_j, phi_j(x_j)}``::

    x_i+ = x_i + delta * (P_i[x_i - gamma * F~_i(x_i, phi_i(x_i) + z_i)] - x_i)
    z_i+ = sum_j w_ij z_j + sum_j w_ij phi_j(x_j) - phi_i(x_i)
"""

import math
import time
import warnings
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from ._engine import (TRACKER_DTYPE, LocalityGuard, RoundScheduler, check_network, guarded_mix,
                      is_diverged)
from ._validation import check_step, check_stop
from .exceptions import DivergenceError
from .trace import Trace, column_sums, exact_column_sums

TRACE_COLUMNS = ("iter", "err_to_oracle", "step_norm", "tracking_err_max", "mean_z_norm",
                 "wall_ns")


@dataclass
class TradesState:
    """Engine state after ``t`` rounds.

    Attributes
    ----------
    x : ndarray of shape (n,)
        Flat strategy profile.
    z : ndarray of shape (N, d)
        Aggregate trackers.
    t : int
    delta, gamma : float
    init_projection_distance : float
        Distance moved when the initial profile was projected onto ``X``.
    """

    x: np.ndarray
    z: np.ndarray
    t: int
    delta: float
    gamma: float
    init_projection_distance: float = 0.0

    def copy(self):
        return replace(self, x=self.x.copy(), z=self.z.copy())


def gamma_bound(game):
    """``2 mu / L^2`` from the game's monotonicity constants (0 if not monotone)."""
    return game.monotonicity_constants().gamma_bound


def init(game, network, x0=None, delta=0.5, gamma=0.001, check_gamma=True):
    """Initial state: ``x0`` projected onto ``X`` and ``z = 0``.

    Warns with ``RuntimeWarning`` when ``gamma`` is not below ``2 mu / L^2``.
    """
    delta = check_step(delta, "delta", high=1.0, high_inclusive=True)
    gamma = check_step(gamma, "gamma")
    check_network(game, network)
    x0 = np.zeros(game.n) if x0 is None else game.check_profile(x0)
    x = game.project(x0)
    dist = float(np.linalg.norm(x - x0))
    if check_gamma:
        bound = gamma_bound(game)
        if gamma >= bound * (1 - 1e-9):
            warnings.warn(f"gamma={gamma:g} is not below the contraction bound "
                          f"2*mu/L^2={bound:g}; convergence is not guaranteed",
                          RuntimeWarning, stacklevel=2)
    return TradesState(x=x, z=np.zeros((game.N, game.agg_dim), dtype=TRACKER_DTYPE), t=0,
                       delta=delta, gamma=gamma, init_projection_distance=dist)


def step(state, game, network, scheduler=None, guard=None):
    """One synchronous round; returns a new state and leaves ``state`` untouched."""
    if guard is not None:
        return _guarded_step(state, game, network, guard)
    sched = scheduler or RoundScheduler(game.N)
    x, z, delta, gamma = state.x, state.z, state.delta, state.gamma
    d = game.agg_dim
    Phi = np.empty((game.N, d))
    x_new = np.empty_like(x)
    z_new = np.empty_like(z)

    def publish(a, b):
        Phi[a:b] = game.phi_range(x, a, b)

    sched(publish)
    board = np.hstack([z, Phi.astype(TRACKER_DTYPE)])
    S = (board[:, d:] + z).astype(float)

    def update(a, b):
        sl = game.layout.span(a, b)
        g = game.f_tilde_range(x, S, a, b)
        xs = x[sl]
        x_new[sl] = xs + delta * (game.project_range(xs - gamma * g, a, b) - xs)
        mixed = network.mix(board, a, b)
        z_new[a:b] = mixed[:, :d] + mixed[:, d:] - board[a:b, d:]

    sched(update)
    return TradesState(x=x_new, z=z_new, t=state.t + 1, delta=delta, gamma=gamma,
                       init_projection_distance=state.init_projection_distance)


def _guarded_step(state, game, network, guard):
    # per-agent round through an explicit mailbox; arithmetic matches step()
    x, z, delta, gamma = state.x, state.z, state.delta, state.gamma
    lay = game.layout
    mailbox = [{"z": z[j], "phi": game.phi_range(x, j, j + 1)[0].astype(TRACKER_DTYPE)}
               for j in range(game.N)]
    x_new = np.empty_like(x)
    z_new = np.empty_like(z)
    for i in range(game.N):
        own = mailbox[i]
        x_i = lay.block(x, i)
        S = np.zeros((game.N, game.agg_dim))
        S[i] = (own["phi"] + own["z"]).astype(float)
        g = game.f_tilde_range(x, S, i, i + 1)
        x_new[lay.span(i, i + 1)] = x_i + delta * (game.project_range(x_i - gamma * g, i, i + 1)
                                                   - x_i)
        z_new[i] = (guarded_mix(guard, mailbox, network, i, "z")
                    + guarded_mix(guard, mailbox, network, i, "phi") - own["phi"])
    return TradesState(x=x_new, z=z_new, t=state.t + 1, delta=delta, gamma=gamma,
                       init_projection_distance=state.init_projection_distance)


def tracker_round(game, network, x, z):
    """Tracker update with the profile ``x`` held fixed (the ``gamma = 0`` round)."""
    d = game.agg_dim
    board = np.hstack([np.asarray(z, dtype=TRACKER_DTYPE),
                       game.phi(x).astype(TRACKER_DTYPE)])
    mixed = network.mix(board)
    return mixed[:, :d] + mixed[:, d:] - board[:, d:]


def reduced_step(game, x, delta, gamma, projection=None):
    """Centralized reduced iteration ``x + delta * (P_X[x - gamma F(x)] - x)``."""
    x = game.check_profile(x)
    proj = projection if projection is not None else game.project
    return x + delta * (proj(x - gamma * game.pseudo_gradient(x)) - x)


def tracking_errors(game, x, z):
    """Per-agent ``||phi_i(x_i) + z_i - sigma(x)||``."""
    P = game.phi(x)
    sig = exact_column_sums(P) / game.N
    return np.linalg.norm((P + z - sig).astype(float), axis=1)


def _norm(v):
    v = v.ravel()
    return math.sqrt(float(v @ v))


def _metrics(game, state, x_star, x_prev, x_star_norm):
    x, z = state.x, state.z
    err = np.nan if x_star is None else _norm(x - x_star) / x_star_norm
    P = game.phi(x)
    sig = column_sums(P) / game.N
    D = (P + z - sig).astype(float)
    return {"iter": state.t, "err_to_oracle": err,
            "step_norm": np.nan if x_prev is None else _norm(x - x_prev),
            "tracking_err_max": math.sqrt(float(np.max(np.einsum("ij,ij->i", D, D)))),
            "mean_z_norm": float(np.max(np.abs(column_sums(z))))}


def run(state, game, network, max_iters=10_000, tol=1e-10, x_star=None, n_workers=None,
        guard_locality=False, record_states=False):
    """Iterate :func:`step` until ``||x+ - x|| / delta <= tol`` or ``max_iters`` rounds.

    A non-finite ``tol`` disables the stopping test so exactly ``max_iters``
    rounds run. Row 0 of the trace describes the initial state.

    Returns
    -------
    state : TradesState
    trace : Trace
    guard : LocalityGuard or None

    Raises
    ------
    DivergenceError
        On non-finite or exploding iterates; carries the last finite state.
    """
    max_iters, tol = check_stop(max_iters, tol)
    guard = LocalityGuard(network, ("z", "phi")) if guard_locality else None
    trace = Trace(TRACE_COLUMNS, record_states=record_states)
    x_star_norm = 1.0
    if x_star is not None:
        x_star = game.check_profile(x_star)
        x_star_norm = _norm(x_star) or 1.0
    trace.append({**_metrics(game, state, x_star, None, x_star_norm), "wall_ns": 0},
                 state.copy() if record_states else None)
    with RoundScheduler(game.N, n_workers) as sched:
        for _ in range(max_iters):
            t0 = time.perf_counter_ns()
            new = step(state, game, network, scheduler=sched, guard=guard)
            wall = time.perf_counter_ns() - t0
            if is_diverged(new.x, new.z):
                raise DivergenceError(f"iterates diverged at round {new.t}",
                                      last_state=state, iteration=new.t, trace=trace)
            trace.append({**_metrics(game, new, x_star, state.x, x_star_norm), "wall_ns": wall},
                         new.copy() if record_states else None)
            moved = _norm(new.x - state.x) / state.delta
            state = new
            if math.isfinite(tol) and moved <= tol:
                break
    return state, trace, guard


class TRADES(BaseEstimator):
    """Distributed NE seeking for aggregative games with local constraints.

    Parameters
    ----------
    delta : float, default=0.5
        Relaxation step in ``(0, 1]``.
    gamma : float, default=0.001
        Gradient step; should stay below ``2 mu / L^2``.
    max_iters : int, default=10000
    tol : float, default=1e-10
        Stop once ``||x+ - x|| / delta <= tol``; ``inf`` disables it.
    n_workers : int, optional
        Threads per round. Results are identical for any value.
    guard_locality : bool, default=False
        Record every cross-agent read and store violations in ``locality_``.
    record_states : bool, default=False
        Keep every state in ``trace_.states``.
    check_gamma : bool, default=True

    Attributes
    ----------
    x_ : ndarray
        Final strategy profile.
    z_ : ndarray of shape (N, d)
    state_ : TradesState
    n_iter_ : int
    trace_ : Trace
    locality_ : LocalityGuard or None
    """

    def __init__(self, delta=0.5, gamma=0.001, max_iters=10_000, tol=1e-10, n_workers=None,
                 guard_locality=False, record_states=False, check_gamma=True):
        self.delta = delta
        self.gamma = gamma
        self.max_iters = max_iters
        self.tol = tol
        self.n_workers = n_workers
        self.guard_locality = guard_locality
        self.record_states = record_states
        self.check_gamma = check_gamma

    def fit(self, game, network, x0=None, x_star=None):
        """Run from ``x0`` (zeros by default) on ``game`` over ``network``."""
        state = init(game, network, x0, self.delta, self.gamma, check_gamma=self.check_gamma)
        state, trace, guard = run(state, game, network, self.max_iters, self.tol, x_star=x_star,
                                  n_workers=self.n_workers, guard_locality=self.guard_locality,
                                  record_states=self.record_states)
        self.state_ = state
        self.x_ = state.x
        self.z_ = state.z
        self.n_iter_ = state.t
        self.trace_ = trace
        self.locality_ = guard
        return self
