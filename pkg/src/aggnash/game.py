"""Aggregative games: costs, aggregation rules, pseudo-gradients, coupling rows.

Agent ``i`` chooses ``x_i`` in R^{n_i}; its cost ``J_i(x_i, s)`` depends on
the aggregate ``s = sigma(x) = (1/N) sum_j phi_j(x_j)`` in R^d. Strategy
profiles are flat arrays laid out by :class:`~aggnash.profile.RaggedLayout`.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._validation import check_random_state
from .exceptions import DimensionError, UnsupportedOperationError
from .profile import RaggedLayout
from .projections import Box, DemandResponseLoad, Free, ProjectionOperator


@dataclass(frozen=True)
class AgentSpec:
    """One player: cost, its two partial gradients and the aggregation rule.

    ``phi_jacobian(x_i)`` has shape ``(n_i, d)`` so that the own-strategy
    gradient of ``J_i(x_i, sigma(x))`` reads
    ``grad1 + phi_jacobian @ grad2 / N``.
    """

    dim: int
    cost: Callable
    grad1: Callable
    grad2: Callable
    phi: Callable
    phi_jacobian: Callable
    local_set: Optional[ProjectionOperator] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None


@dataclass(frozen=True)
class MonotonicityEstimate:
    """Empirical strong-monotonicity and Lipschitz constants of F."""

    mu: float
    L: float
    n_pairs: int

    @property
    def monotone(self):
        return self.mu > 0

    @property
    def gamma_bound(self):
        """Step-size bound ``2 mu / L^2`` (0 when F is not strongly monotone)."""
        if self.mu <= 0 or self.L <= 0:
            return 0.0
        return 2.0 * self.mu / self.L ** 2


def check_gradients(agent, n_agents, agg_dim, n_probes=5, step=1e-6, rtol=1e-5,
                    random_state=None, scale=1.0):
    """Compare analytic gradients of ``agent`` with central differences.

    Raises ``ValueError`` naming the first mismatching quantity.
    """
    rng = check_random_state(random_state)
    n = agent.dim
    for _ in range(n_probes):
        x = rng.uniform(-scale, scale, n)
        s = rng.uniform(-scale, scale, agg_dim)
        g1 = np.asarray(agent.grad1(x, s), dtype=float)
        g2 = np.asarray(agent.grad2(x, s), dtype=float)
        jac = np.asarray(agent.phi_jacobian(x), dtype=float).reshape(n, agg_dim)
        fd1 = np.empty(n)
        fd_jac = np.empty((n, agg_dim))
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            fd1[k] = (agent.cost(x + e, s) - agent.cost(x - e, s)) / (2 * step)
            fd_jac[k] = (np.asarray(agent.phi(x + e)) - np.asarray(agent.phi(x - e))) / (2 * step)
        fd2 = np.empty(agg_dim)
        for c in range(agg_dim):
            e = np.zeros(agg_dim)
            e[c] = step
            fd2[c] = (agent.cost(x, s + e) - agent.cost(x, s - e)) / (2 * step)
        for name, an, fd in (("grad1", g1, fd1), ("grad2", g2, fd2), ("phi_jacobian", jac, fd_jac)):
            if not np.allclose(an, fd, rtol=rtol, atol=rtol * max(1.0, np.max(np.abs(fd)))):
                raise ValueError(f"{name} disagrees with finite differences "
                                 f"(max error {np.max(np.abs(an - fd)):.2e})")
    return True


class AggregativeGame:
    """A finite collection of agents sharing an aggregate of dimension ``agg_dim``.

    Parameters
    ----------
    agents : list of AgentSpec
    agg_dim : int
    check_gradients : bool, default=True
        Run a finite-difference self-check of every agent at construction.
    n_probes : int, default=5
        Probes per agent for that check.

    Notes
    -----
    Game data is treated as immutable after construction. The ``*_range``
    methods evaluate agents ``start .. stop-1`` only and touch nothing but
    those agents' blocks; the engines rely on this for their round-parallel
    mode.
    """

    affine = False

    def __init__(self, agents, agg_dim, check_gradients=True, n_probes=5, random_state=0):
        agents = list(agents)
        if not agents:
            raise DimensionError("a game needs at least one agent")
        self.agents = agents
        self.agg_dim = int(agg_dim)
        if self.agg_dim <= 0:
            raise DimensionError("agg_dim must be positive")
        self.layout = RaggedLayout([a.dim for a in agents])
        with_rows = [a.A is not None for a in agents]
        if any(with_rows) and not all(with_rows):
            missing = with_rows.index(False)
            raise DimensionError(f"agent {missing} supplies no coupling rows", agent=missing)
        self.m = 0
        if all(with_rows):
            ms = {np.atleast_2d(a.A).shape[0] for a in agents}
            if len(ms) != 1:
                raise DimensionError(f"agents disagree on the coupling row count: {sorted(ms)}")
            self.m = ms.pop()
            for i, a in enumerate(agents):
                if np.atleast_2d(a.A).shape != (self.m, a.dim):
                    raise DimensionError(f"agent {i}: A_i has shape {np.shape(a.A)}", agent=i)
                if np.atleast_1d(a.b).shape != (self.m,):
                    raise DimensionError(f"agent {i}: b_i has shape {np.shape(a.b)}", agent=i)
        self._setup_coupling()
        if check_gradients:
            rng = check_random_state(random_state)
            for i, a in enumerate(agents):
                try:
                    globals()["check_gradients"](a, self.N, self.agg_dim, n_probes=n_probes,
                                                 random_state=rng)
                except ValueError as exc:
                    raise ValueError(f"agent {i}: {exc}") from exc
        self._affine_cache = None

    # -- shape helpers -------------------------------------------------
    @property
    def N(self):
        return self.layout.n_agents

    @property
    def n(self):
        return self.layout.size

    @property
    def dims(self):
        return self.layout.dims

    @property
    def has_coupling(self):
        return self.m > 0

    @property
    def local_sets(self):
        return [a.local_set for a in self.agents]

    def has_local_constraints(self):
        return any(s is not None and not isinstance(s, Free) for s in self.local_sets)

    def check_profile(self, x):
        return self.layout.check(x)

    def _setup_coupling(self):
        if self.m == 0:
            self.A = np.zeros((0, self.n))
            self.b_blocks = np.zeros((self.N, 0))
            self.b = np.zeros(0)
            return
        self.A = np.hstack([np.atleast_2d(np.asarray(a.A, dtype=float)) for a in self.agents])
        self.b_blocks = np.vstack([np.atleast_1d(np.asarray(a.b, dtype=float))
                                   for a in self.agents])
        self.b = self.b_blocks.sum(axis=0)

    # -- aggregation ---------------------------------------------------
    def phi_range(self, x, start, stop):
        """Rows ``phi_i(x_i)`` for agents in ``[start, stop)``, shape ``(k, d)``."""
        out = np.empty((stop - start, self.agg_dim))
        for r, i in enumerate(range(start, stop)):
            out[r] = self.agents[i].phi(self.layout.block(x, i))
        return out

    def phi(self, x):
        return self.phi_range(x, 0, self.N)

    def sigma(self, x):
        """Aggregate ``(1/N) sum_i phi_i(x_i)``.

        Each channel is summed with ``math.fsum``, which is correctly rounded
        and therefore independent of agent order.
        """
        x = self.check_profile(x)
        P = self.phi(x)
        return np.array([math.fsum(P[:, c]) for c in range(self.agg_dim)]) / self.N

    # -- gradients -----------------------------------------------------
    def f_tilde(self, i, x_i, s):
        """``grad1 J_i(x_i, s) + phi_jacobian(x_i) grad2 J_i(x_i, s) / N``."""
        a = self.agents[i]
        x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
        if x_i.shape != (a.dim,):
            raise DimensionError(f"agent {i}: strategy has shape {x_i.shape}", agent=i)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        jac = np.asarray(a.phi_jacobian(x_i), dtype=float).reshape(a.dim, self.agg_dim)
        return np.asarray(a.grad1(x_i, s), dtype=float) + jac @ np.asarray(a.grad2(x_i, s)) / self.N

    def f_tilde_range(self, x, S, start, stop):
        """Stacked ``f_tilde`` for agents in ``[start, stop)`` with local aggregates ``S``.

        ``S`` has one row per agent of the whole game.
        """
        out = np.empty(int(self.layout.offsets[stop] - self.layout.offsets[start]))
        base = self.layout.offsets[start]
        for i in range(start, stop):
            lo, hi = self.layout.offsets[i] - base, self.layout.offsets[i + 1] - base
            out[lo:hi] = self.f_tilde(i, self.layout.block(x, i), S[i])
        return out

    def pseudo_gradient(self, x):
        """``F(x)``: every agent's own-strategy gradient at the true aggregate."""
        x = self.check_profile(x)
        s = self.sigma(x)
        return self.f_tilde_range(x, np.broadcast_to(s, (self.N, self.agg_dim)), 0, self.N)

    # -- coupling constraints -----------------------------------------
    def _require_coupling(self):
        if self.m == 0:
            raise UnsupportedOperationError("this game has no coupling constraints")

    def coupling_residual(self, x):
        """``c(x) = sum_i (A_i x_i - b_i) = Ax - b``."""
        self._require_coupling()
        x = self.check_profile(x)
        return self.local_residual_range(x, 0, self.N).sum(axis=0)

    def local_residual_range(self, x, start, stop):
        """Rows ``A_i x_i - b_i`` for agents in ``[start, stop)``, shape ``(k, m)``."""
        out = np.empty((stop - start, self.m))
        for r, i in enumerate(range(start, stop)):
            A_i = self.A[:, self.layout.offsets[i]:self.layout.offsets[i + 1]]
            out[r] = A_i @ self.layout.block(x, i) - self.b_blocks[i]
        return out

    def coupling_adjoint_range(self, G, start, stop):
        """Stacked ``A_i^T G[i]`` for agents in ``[start, stop)``; ``G`` has N rows."""
        sl = self.layout.span(start, stop)
        out = np.empty(sl.stop - sl.start)
        base = sl.start
        for i in range(start, stop):
            lo, hi = self.layout.offsets[i], self.layout.offsets[i + 1]
            out[lo - base:hi - base] = self.A[:, lo:hi].T @ G[i]
        return out

    # -- local sets ----------------------------------------------------
    def project_range(self, v, start, stop):
        """Project the flat segment ``v`` of agents ``[start, stop)`` onto their sets."""
        out = np.empty_like(v)
        base = self.layout.offsets[start]
        for i in range(start, stop):
            lo, hi = self.layout.offsets[i] - base, self.layout.offsets[i + 1] - base
            s = self.agents[i].local_set
            out[lo:hi] = v[lo:hi] if s is None else s.project(v[lo:hi])
        return out

    def project(self, x):
        """Projection onto the product set ``X = X_1 x ... x X_N``."""
        return self.project_range(self.check_profile(x), 0, self.N)

    # -- structure -----------------------------------------------------
    def affine_form(self):
        """``(M, q)`` with ``F(x) = M x + q``; only for games declared affine."""
        if not self.affine:
            raise UnsupportedOperationError("pseudo-gradient is not declared affine")
        if self._affine_cache is None:
            q = self.pseudo_gradient(np.zeros(self.n))
            M = np.empty((self.n, self.n))
            for k in range(self.n):
                e = np.zeros(self.n)
                e[k] = 1.0
                M[:, k] = self.pseudo_gradient(e) - q
            self._affine_cache = (M, q)
        return self._affine_cache

    def monotonicity_constants(self, region=None, sample_count=64, random_state=0):
        """``(mu, L)`` of F: exact for affine games, sampled otherwise."""
        if self.affine:
            M, _ = self.affine_form()
            mu = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
            L = float(np.linalg.norm(M, 2))
            return MonotonicityEstimate(mu, L, 0)
        if region is None:
            region = (-np.ones(self.n), np.ones(self.n))
        return estimate_monotonicity(self, sample_count, region, random_state=random_state)


def sigma(game, x):
    return game.sigma(x)


def pseudo_gradient(game, x):
    return game.pseudo_gradient(x)


def f_tilde(game, i, x_i, s):
    return game.f_tilde(i, x_i, s)


def coupling_residual(game, x):
    return game.coupling_residual(x)


def estimate_monotonicity(game, sample_count, region, random_state=None):
    """Sampled monotonicity and Lipschitz constants of the pseudo-gradient.

    Draws ``sample_count`` points uniformly from the box ``region = (lo, hi)``
    and evaluates every pair. The returned ``mu`` over-estimates the true
    strong-monotonicity modulus and ``L`` under-estimates the Lipschitz
    constant, so the pair is advisory: it suggests step sizes but certifies
    nothing.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    lo, hi = region
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (game.n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (game.n,))
    if np.any(hi <= lo):
        raise ValueError("sampling region has zero volume")
    rng = check_random_state(random_state)
    X = rng.uniform(lo, hi, size=(sample_count, game.n))
    FX = np.array([game.pseudo_gradient(x) for x in X])
    iu, ju = np.triu_indices(sample_count, k=1)
    dX = X[iu] - X[ju]
    dF = FX[iu] - FX[ju]
    nx2 = np.einsum("ij,ij->i", dX, dX)
    keep = nx2 > 0
    dX, dF, nx2 = dX[keep], dF[keep], nx2[keep]
    mu = float(np.min(np.einsum("ij,ij->i", dF, dX) / nx2))
    L = float(np.max(np.linalg.norm(dF, axis=1) / np.sqrt(nx2)))
    return MonotonicityEstimate(mu, L, int(keep.sum()))


# ---------------------------------------------------------------------------
# built-in families


class QuadraticAggregativeGame(AggregativeGame):
    """``J_i(x_i, s) = x_i^T Q_i x_i / 2 + x_i^T C_i s + q_i^T x_i``, ``phi_i = B_i x_i``.

    The pseudo-gradient is affine, ``F(x) = M x + q``, with diagonal blocks
    ``Q_i + (C_i B_i + B_i^T C_i^T) / N`` and off-diagonal blocks
    ``C_i B_j / N``.
    """

    affine = True

    def __init__(self, Q, C, q, B, local_sets=None, A=None, b=None):
        N = len(Q)
        self.Q = [np.atleast_2d(np.asarray(Qi, dtype=float)) for Qi in Q]
        self.C = [np.atleast_2d(np.asarray(Ci, dtype=float)) for Ci in C]
        self.q = [np.atleast_1d(np.asarray(qi, dtype=float)) for qi in q]
        self.B = [np.atleast_2d(np.asarray(Bi, dtype=float)) for Bi in B]
        d = self.B[0].shape[0]
        local_sets = local_sets if local_sets is not None else [None] * N
        agents = []
        for i in range(N):
            Qi, Ci, qi, Bi = self.Q[i], self.C[i], self.q[i], self.B[i]
            agents.append(AgentSpec(
                dim=Qi.shape[0],
                cost=lambda x, s, Qi=Qi, Ci=Ci, qi=qi: 0.5 * x @ Qi @ x + x @ Ci @ s + qi @ x,
                grad1=lambda x, s, Qi=Qi, Ci=Ci, qi=qi: 0.5 * (Qi + Qi.T) @ x + Ci @ s + qi,
                grad2=lambda x, s, Ci=Ci: Ci.T @ x,
                phi=lambda x, Bi=Bi: Bi @ x,
                phi_jacobian=lambda x, Bi=Bi: Bi.T,
                local_set=local_sets[i],
                A=None if A is None else A[i],
                b=None if b is None else b[i]))
        super().__init__(agents, d, check_gradients=False)

    def affine_form(self):
        if self._affine_cache is None:
            N, offs = self.N, self.layout.offsets
            M = np.zeros((self.n, self.n))
            for i in range(N):
                si = slice(offs[i], offs[i + 1])
                Qs = 0.5 * (self.Q[i] + self.Q[i].T)
                M[si, si] += Qs + self.B[i].T @ self.C[i].T / N
                for j in range(N):
                    sj = slice(offs[j], offs[j + 1])
                    M[si, sj] += self.C[i] @ self.B[j] / N
            self._affine_cache = (M, np.concatenate(self.q))
        return self._affine_cache

    @classmethod
    def random(cls, N, dims, agg_dim=1, mu=1.0, coupling_strength=0.3, box=None,
               random_state=None):
        """Random strongly monotone instance with block sizes ``dims``.

        ``box=(lo, hi)`` attaches that box as every agent's local set.
        """
        rng = check_random_state(random_state)
        dims = [dims] * N if np.isscalar(dims) else list(dims)
        while True:
            Q, C, q, B = [], [], [], []
            for k in dims:
                R = rng.normal(size=(k, k))
                Q.append(R @ R.T / k + mu * np.eye(k))
                C.append(coupling_strength * rng.normal(size=(k, agg_dim)))
                q.append(rng.uniform(-2, 2, size=k))
                B.append(rng.normal(size=(agg_dim, k)) / np.sqrt(k))
            sets = None
            if box is not None:
                sets = [Box(box[0], box[1], dim=k) for k in dims]
            game = cls(Q, C, q, B, local_sets=sets)
            if game.monotonicity_constants().mu > 0.1 * mu:
                return game

    def to_dict(self):
        doc = {"family": "quadratic-aggregative",
               "agents": [{"Q": self.Q[i].tolist(), "C": self.C[i].tolist(),
                           "q": self.q[i].tolist(), "B": self.B[i].tolist()}
                          for i in range(self.N)]}
        for i, a in enumerate(self.agents):
            if a.local_set is not None:
                doc["agents"][i]["local_set"] = a.local_set.to_dict()
            if a.A is not None:
                doc["agents"][i]["A"] = np.atleast_2d(a.A).tolist()
                doc["agents"][i]["b"] = np.atleast_1d(a.b).tolist()
        return doc


class _UniformGame(AggregativeGame):
    """Shared vectorized paths for families with identical blocks and ``phi_i = id``."""

    affine = True

    def phi_range(self, x, start, stop):
        return self.layout.as_matrix(x)[start:stop].copy()

    def f_tilde(self, i, x_i, s):
        x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
        if x_i.shape != (self.dims[i],):
            raise DimensionError(f"agent {i}: strategy has shape {x_i.shape}", agent=i)
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return self._f_rows(x_i[None], s[None], slice(i, i + 1))[0]

    def f_tilde_range(self, x, S, start, stop):
        X = self.layout.as_matrix(x)[start:stop]
        return self._f_rows(X, S[start:stop], slice(start, stop)).reshape(-1)

    def project_range(self, v, start, stop):
        if all(a.local_set is None for a in self.agents[start:stop]):
            return v.copy()
        return super().project_range(v, start, stop)

    def local_residual_range(self, x, start, stop):
        X = self.layout.as_matrix(x)[start:stop]
        A = self._A3[start:stop]
        # fixed-order contraction over the strategy coordinates
        out = A[:, :, 0] * X[:, None, 0]
        for k in range(1, X.shape[1]):
            out = out + A[:, :, k] * X[:, None, k]
        return out - self.b_blocks[start:stop]

    def coupling_adjoint_range(self, G, start, stop):
        A = self._A3[start:stop]
        Gs = G[start:stop]
        out = A[:, 0, :] * Gs[:, 0, None]
        for l in range(1, self.m):
            out = out + A[:, l, :] * Gs[:, l, None]
        return out.reshape(-1)

    def _setup_coupling(self):
        super()._setup_coupling()
        if self.m:
            k = self.dims[0]
            self._A3 = np.stack([self.A[:, i * k:(i + 1) * k] for i in range(self.N)])


class DemandResponseGame(_UniformGame):
    """Flexible loads sharing an affine electricity price.

    ``J_i(x_i, s) = rho_i ||x_i - u_hat_i||^2 + (lam * s + p0)^T x_i`` with
    ``phi_i = id`` (so ``s`` is the average consumption profile) and ``X_i``
    the load's feasible consumption set.
    """

    def __init__(self, rho, u_hat, lam, p0, loads=None, set_method="exact"):
        self.rho = np.asarray(rho, dtype=float)
        self.u_hat = np.atleast_2d(np.asarray(u_hat, dtype=float))
        self.lam = float(lam)
        self.p0 = np.asarray(p0, dtype=float)
        self.loads = loads
        N, T = self.u_hat.shape
        sets = [None] * N if loads is None else [ld.feasible_set(method=set_method) for ld in loads]
        agents = []
        for i in range(N):
            r, uh = self.rho[i], self.u_hat[i]
            agents.append(AgentSpec(
                dim=T,
                cost=lambda x, s, r=r, uh=uh: (r * (x - uh) @ (x - uh)
                                               + (self.lam * s + self.p0) @ x),
                grad1=lambda x, s, r=r, uh=uh: 2 * r * (x - uh) + self.lam * s + self.p0,
                grad2=lambda x, s: self.lam * x,
                phi=lambda x: x.copy(),
                phi_jacobian=lambda x: np.eye(x.shape[0]),
                local_set=sets[i]))
        super().__init__(agents, T, check_gradients=False)

    def _f_rows(self, X, S, rows):
        r = self.rho[rows, None]
        return 2 * r * (X - self.u_hat[rows]) + self.lam * S + self.p0 + self.lam * X / self.N

    def to_dict(self):
        doc = {"family": "demand-response", "lam": self.lam, "p0": self.p0.tolist(),
               "agents": []}
        for i in range(self.N):
            ag = {"rho": float(self.rho[i]), "u_hat": self.u_hat[i].tolist()}
            if self.loads is not None:
                ld = self.loads[i]
                ag.update(a=ld.a, b=ld.b, s1=ld.s1, u_bounds=list(ld.u_bounds),
                          s_bounds=list(ld.s_bounds))
            doc["agents"].append(ag)
        return doc


class DeviationTrackingGame(_UniformGame):
    """``J_i(x_i, s) = ||x_i - p_i||^2 / 2 + w ||x_i - s||^2 / 2`` with ``phi_i = id``.

    The deviation penalty is squared so that the cost is continuously
    differentiable. Optional coupling rows ``A_i, b_i`` define shared
    constraints ``sum_i (A_i x_i - b_i) <= 0``.
    """

    def __init__(self, P, w, A=None, b=None):
        self.P = np.atleast_2d(np.asarray(P, dtype=float))
        self.w = float(w)
        N, k = self.P.shape
        agents = []
        for i in range(N):
            p = self.P[i]
            agents.append(AgentSpec(
                dim=k,
                cost=lambda x, s, p=p: 0.5 * (x - p) @ (x - p) + 0.5 * self.w * (x - s) @ (x - s),
                grad1=lambda x, s, p=p: x - p + self.w * (x - s),
                grad2=lambda x, s: -self.w * (x - s),
                phi=lambda x: x.copy(),
                phi_jacobian=lambda x: np.eye(x.shape[0]),
                A=None if A is None else np.atleast_2d(A[i]),
                b=None if b is None else np.atleast_1d(b[i])))
        super().__init__(agents, k, check_gradients=False)

    def _f_rows(self, X, S, rows):
        D = X - S
        return X - self.P[rows] + self.w * D - self.w * D / self.N

    def to_dict(self):
        doc = {"family": "deviation-tracking", "w": self.w,
               "agents": [{"p": self.P[i].tolist()} for i in range(self.N)]}
        if self.m:
            for i in range(self.N):
                doc["agents"][i]["A"] = self._A3[i].tolist()
                doc["agents"][i]["b"] = self.b_blocks[i].tolist()
        return doc


def game_from_dict(doc):
    """Build a built-in game from its JSON document.

    Families: ``quadratic-aggregative``, ``demand-response``,
    ``deviation-tracking``. Custom costs are only available from Python.
    """
    from .exceptions import ConfigError
    from .projections import set_from_dict

    try:
        family = doc["family"]
        agents = doc["agents"]
        if family == "quadratic-aggregative":
            dims = [np.atleast_2d(a["Q"]).shape[0] for a in agents]
            sets = [set_from_dict(a.get("local_set"), k) for a, k in zip(agents, dims)]
            A = [a["A"] for a in agents] if "A" in agents[0] else None
            b = [a["b"] for a in agents] if "A" in agents[0] else None
            return QuadraticAggregativeGame([a["Q"] for a in agents], [a["C"] for a in agents],
                                            [a["q"] for a in agents], [a["B"] for a in agents],
                                            local_sets=sets, A=A, b=b)
        if family == "demand-response":
            u_hat = np.array([a["u_hat"] for a in agents], dtype=float)
            loads = None
            if "a" in agents[0]:
                T = u_hat.shape[1]
                loads = [DemandResponseLoad(a["a"], a["b"], a["s1"], float(np.sum(a["u_hat"])), T,
                                            tuple(a.get("u_bounds", (0.0, 1.0))),
                                            tuple(a.get("s_bounds", (0.0, 10.0))))
                         for a in agents]
            return DemandResponseGame([a["rho"] for a in agents], u_hat, doc["lam"], doc["p0"],
                                      loads=loads)
        if family == "deviation-tracking":
            A = [a["A"] for a in agents] if "A" in agents[0] else None
            b = [a["b"] for a in agents] if "A" in agents[0] else None
            return DeviationTrackingGame([a["p"] for a in agents], doc["w"], A=A, b=b)
    except KeyError as exc:
        raise ConfigError(f"game document is missing {exc}") from exc
    raise ConfigError(f"unknown game family {doc.get('family')!r}")
