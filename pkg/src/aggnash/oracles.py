"""Reference solutions, KKT certificates, rate fits and fast-state diagnostics."""

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import AssumptionViolationError, NoConvergenceError, UnsupportedOperationError
from .trace import column_sums
from .trades_c import centralized_pd_step, grad_h


@dataclass(frozen=True)
class KktReport:
    """Residuals of the v-GNE optimality system at a candidate pair.

    ``primal_res = ||F(x) + grad_x H(Ax - b, lam)||``,
    ``dual_res = ||grad_lam H(Ax - b, lam)||``,
    ``cons_violation = ||max(Ax - b, 0)||_inf`` and
    ``complementarity = sum_l |lam_l (Ax - b)_l|``.
    """

    primal_res: float
    dual_res: float
    cons_violation: float
    complementarity: float

    def certified(self, tol=1e-6):
        return max(self.primal_res, self.dual_res, self.cons_violation,
                   self.complementarity) <= tol

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class RateFit:
    """Q-linear rate estimate of an error sequence.

    ``r`` is the largest one-step ratio ``e_{t+1}/e_t`` over ``window``;
    ``slope`` and ``a1`` describe the least-squares line
    ``log e_t ~ log a1 + slope * t`` and ``residual`` its RMS misfit.
    """

    r: float
    slope: float
    a1: float
    window: tuple
    residual: float
    qlinear: bool

    def to_dict(self):
        d = asdict(self)
        d["window"] = list(self.window)
        return d


def kkt_residual(game, x, lam, rho):
    """KKT residuals of ``(x, lam)`` for the augmented Lagrangian with parameter ``rho``."""
    if game.m == 0:
        raise UnsupportedOperationError("KKT residuals need coupling constraints")
    x = game.check_profile(x)
    lam = np.asarray(lam, dtype=float)
    c = game.coupling_residual(x)
    K, g_lam = grad_h(c, lam, rho)
    adj = game.coupling_adjoint_range(np.broadcast_to(K, (game.N, game.m)), 0, game.N)
    return KktReport(primal_res=float(np.linalg.norm(game.pseudo_gradient(x) + adj)),
                     dual_res=float(np.linalg.norm(g_lam)),
                     cons_violation=float(max(0.0, np.max(c))),
                     complementarity=float(np.sum(np.abs(lam * c))))


def solve_ne(game, projection=None, gamma=None, tol=1e-10, max_iters=200_000, x0=None):
    """Nash equilibrium by projected pseudo-gradient iteration.

    Iterates ``x <- P_X[x - gamma F(x)]`` until the fixed-point residual
    ``||x - P_X[x - gamma F(x)]||`` is at most ``tol``.

    Parameters
    ----------
    gamma : float, optional
        Defaults to ``mu / L^2`` from the game's monotonicity constants.

    Raises
    ------
    NoConvergenceError
        When ``max_iters`` is exhausted.
    """
    if game.m > 0:
        raise UnsupportedOperationError("game has coupling constraints; use solve_vgne")
    proj = projection if projection is not None else game.project
    if gamma is None:
        mc = game.monotonicity_constants()
        if mc.mu <= 0:
            raise AssumptionViolationError("pseudo-gradient is not strongly monotone")
        gamma = mc.mu / mc.L ** 2
    elif gamma >= game.monotonicity_constants().gamma_bound:
        warnings.warn("gamma is not below 2*mu/L^2; the iteration may not contract",
                      RuntimeWarning, stacklevel=2)
    x = proj(np.zeros(game.n) if x0 is None else game.check_profile(x0))
    history = []
    for _ in range(max_iters):
        x_new = proj(x - gamma * game.pseudo_gradient(x))
        res = float(np.linalg.norm(x_new - x))
        history.append(res)
        if res <= tol:
            # the residual was measured at x, which is what we return
            return x
        x = x_new
    raise NoConvergenceError(f"projected gradient residual {res:.3e} after {max_iters} "
                             "iterations", residual=res, history=np.array(history))


def coupling_rank_margin(game):
    """Smallest eigenvalue of ``A A^T`` relative to its largest."""
    s = np.linalg.svd(game.A, compute_uv=False)
    if s.size < game.m:
        return 0.0
    return float((s[-1] / s[0]) ** 2) if s[0] > 0 else 0.0


def solve_vgne(game, delta=None, rho=0.1, tol=1e-8, max_iters=500_000, x0=None, lam0=None,
               check_every=25, rank_tol=1e-12):
    """Variational GNE by the centralized augmented primal-dual iteration.

    Returns ``(x, lam, report)`` where ``report`` is the :class:`KktReport`
    at exit, all of whose fields are at most ``tol``.

    Parameters
    ----------
    delta : float, optional
        Defaults to ``min(rho / 2, 1 / (L + rho ||A||^2))``.

    Raises
    ------
    AssumptionViolationError
        When ``A`` lacks full row rank.
    NoConvergenceError
        When ``max_iters`` is exhausted; carries the residual history.
    """
    if game.m == 0:
        raise UnsupportedOperationError("game has no coupling constraints; use solve_ne")
    if coupling_rank_margin(game) <= rank_tol:
        raise AssumptionViolationError("coupling matrix A does not have full row rank")
    if delta is None:
        L = game.monotonicity_constants().L
        delta = min(rho / 2, 1.0 / (L + rho * np.linalg.norm(game.A, 2) ** 2))
    x = np.zeros(game.n) if x0 is None else game.check_profile(x0)
    lam = np.zeros(game.m) if lam0 is None else np.array(lam0, dtype=float)
    history = []
    for k in range(max_iters):
        if k % check_every == 0:
            rep = kkt_residual(game, x, lam, rho)
            worst = max(rep.primal_res, rep.dual_res, rep.cons_violation, rep.complementarity)
            history.append(worst)
            if worst <= tol:
                return x, lam, rep
            if not math.isfinite(worst):
                break
        x, lam = centralized_pd_step(game, x, lam, delta, rho)
    raise NoConvergenceError(f"KKT residual {history[-1]:.3e} after {k + 1} iterations",
                             residual=history[-1], history=np.array(history))


def fit_qlinear_rate(errors, burn_in=0, floor=0.0, gap=1e-6):
    """Fit a Q-linear rate to a positive error sequence.

    The window starts after ``burn_in`` and ends before the first entry that
    is at most ``floor`` (use a floor above the rounding noise of the
    computation). The sequence is flagged Q-linear when the largest one-step
    ratio is below ``1 - gap``.
    """
    e = np.asarray(errors, dtype=float)
    if burn_in >= e.size:
        raise ValueError("burn_in leaves no data")
    stop = e.size
    low = np.flatnonzero(e[burn_in:] <= floor)
    if low.size:
        stop = burn_in + int(low[0])
    w = e[burn_in:stop]
    if w.size < 2:
        raise ValueError("fewer than two points in the fitting window")
    if np.any(~np.isfinite(w)):
        raise ValueError("error series has non-finite entries in the window")
    r = float(np.max(w[1:] / w[:-1]))
    t = np.arange(burn_in, stop, dtype=float)
    (slope, icpt), res, *_ = np.polyfit(t, np.log(w), 1, full=True)
    resid = math.sqrt(float(res[0]) / w.size) if res.size else 0.0
    return RateFit(r=r, slope=float(slope), a1=float(np.exp(icpt)), window=(burn_in, stop - 1),
                   residual=resid, qlinear=bool(r < 1.0 - gap))


def sp_diagnostics(trace, network, game):
    """Fast-state energies along a trace recorded with ``record_states=True``.

    Returns a dict of arrays:

    ``tracking_energy``
        ``sum_i ||z_i + phi_i(x_i) - sigma(x)||^2``.
    ``constraint_tracking_energy``
        ``sum_i ||y_i + N (A_i x_i - b_i) - (Ax - b)||^2`` (zeros without ``y``).
    ``dual_consensus_energy``
        ``||lam - 1 lam_bar||^2`` (zeros without multipliers).
    """
    states = getattr(trace, "states", None)
    if not states:
        raise UnsupportedOperationError("trace has no recorded states; rerun with "
                                        "record_states=True")
    out = {k: np.zeros(len(states)) for k in ("iter", "tracking_energy",
                                              "constraint_tracking_energy",
                                              "dual_consensus_energy")}
    for k, st in enumerate(states):
        out["iter"][k] = st.t
        out["tracking_energy"][k] = tracking_energy(game, st.x, st.z)
        if hasattr(st, "y"):
            C = game.N * game.local_residual_range(st.x, 0, game.N)
            c = column_sums(C) / game.N
            D = (C + st.y - c).astype(float)
            out["constraint_tracking_energy"][k] = float(np.sum(D * D))
            lam_bar = column_sums(st.lam) / game.N
            E = (st.lam - lam_bar).astype(float)
            out["dual_consensus_energy"][k] = float(np.sum(E * E))
    return out


def tracking_energy(game, x, z):
    """``sum_i ||z_i + phi_i(x_i) - sigma(x)||^2``."""
    P = game.phi(x)
    D = (P + z - column_sums(P) / game.N).astype(float)
    return float(np.sum(D * D))
