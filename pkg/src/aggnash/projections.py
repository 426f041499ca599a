"""Euclidean projection operators for local feasible sets.

Every operator maps a point to its nearest point in a closed convex set.
Simple sets have closed forms; intersections are handled by Dykstra's
alternating projections or, when every component is polyhedral, by an exact
active-set method with a least-distance (NNLS) fallback.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .exceptions import ConfigError, DimensionError, InfeasibleSetError


class ProjectionOperator:
    """Base class. Subclasses implement :meth:`project`."""

    polyhedral = False
    dim = None

    def project(self, x):
        raise NotImplementedError

    def __call__(self, x):
        return self.project(x)

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(x - self.project(x)) <= tol * (1.0 + np.linalg.norm(x)))

    def constraint_rows(self, n):
        """Return ``(G, h, E, e)`` with the set equal to ``{Gx <= h, Ex = e}``."""
        raise NotImplementedError(f"{type(self).__name__} is not polyhedral")

    def _check_dim(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionError(f"expected a vector, got shape {x.shape}")
        if self.dim is not None and x.shape[0] != self.dim:
            raise DimensionError(f"{type(self).__name__} acts on R^{self.dim}, got R^{x.shape[0]}")
        return x


def _empty_rows(n):
    return np.zeros((0, n)), np.zeros(0)


class Free(ProjectionOperator):
    """The whole space; projection is the identity."""

    polyhedral = True

    def __init__(self, dim=None):
        self.dim = dim

    def project(self, x):
        return self._check_dim(x).copy()

    def constraint_rows(self, n):
        G, h = _empty_rows(n)
        E, e = _empty_rows(n)
        return G, h, E, e

    def to_dict(self):
        return {"type": "free"}


class Box(ProjectionOperator):
    """Component-wise bounds ``lo <= x <= hi`` (infinite bounds allowed)."""

    polyhedral = True

    def __init__(self, lo, hi, dim=None):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.ndim > 1 or hi.ndim > 1:
            raise DimensionError("box bounds must be scalars or vectors")
        if dim is None and (lo.ndim == 1 or hi.ndim == 1):
            dim = lo.shape[0] if lo.ndim == 1 else hi.shape[0]
        if dim is not None:
            lo = np.broadcast_to(lo, (dim,)).copy()
            hi = np.broadcast_to(hi, (dim,)).copy()
        if np.any(lo > hi):
            raise InfeasibleSetError("box has lo > hi", residual=float(np.max(lo - hi)))
        self.lo, self.hi, self.dim = lo, hi, dim

    def project(self, x):
        return np.clip(self._check_dim(x), self.lo, self.hi)

    def constraint_rows(self, n):
        lo = np.broadcast_to(self.lo, (n,))
        hi = np.broadcast_to(self.hi, (n,))
        eye = np.eye(n)
        up, dn = np.isfinite(hi), np.isfinite(lo)
        G = np.vstack([eye[up], -eye[dn]])
        h = np.concatenate([hi[up], -lo[dn]])
        E, e = _empty_rows(n)
        return G, h, E, e

    def to_dict(self):
        return {"type": "box", "lo": np.asarray(self.lo).tolist(),
                "hi": np.asarray(self.hi).tolist()}


class NonnegativeOrthant(ProjectionOperator):
    polyhedral = True

    def __init__(self, dim=None):
        self.dim = dim

    def project(self, x):
        return np.maximum(self._check_dim(x), 0.0)

    def constraint_rows(self, n):
        E, e = _empty_rows(n)
        return -np.eye(n), np.zeros(n), E, e

    def to_dict(self):
        return {"type": "orthant"}


class Halfspace(ProjectionOperator):
    """``{x : a^T x <= beta}``."""

    polyhedral = True

    def __init__(self, a, beta):
        a = np.asarray(a, dtype=float)
        if a.ndim != 1:
            raise DimensionError("halfspace normal must be a vector")
        nrm2 = float(a @ a)
        if nrm2 == 0.0:
            if beta < 0:
                raise InfeasibleSetError("0^T x <= beta with beta < 0 is empty", residual=-beta)
        self.a, self.beta, self.dim = a, float(beta), a.shape[0]
        self._nrm2 = nrm2

    def project(self, x):
        x = self._check_dim(x)
        viol = self.a @ x - self.beta
        if viol <= 0.0 or self._nrm2 == 0.0:
            return x.copy()
        return x - (viol / self._nrm2) * self.a

    def constraint_rows(self, n):
        E, e = _empty_rows(n)
        return self.a[None, :], np.array([self.beta]), E, e

    def to_dict(self):
        return {"type": "halfspace", "a": self.a.tolist(), "beta": self.beta}


class AffineEquality(ProjectionOperator):
    """``{x : Cx = e}``; closed form ``x - C^T (C C^T)^{-1} (Cx - e)``."""

    polyhedral = True

    def __init__(self, C, e):
        C = np.atleast_2d(np.asarray(C, dtype=float))
        e = np.atleast_1d(np.asarray(e, dtype=float))
        if C.shape[0] != e.shape[0]:
            raise DimensionError(f"C has {C.shape[0]} rows but e has {e.shape[0]} entries")
        pinv = np.linalg.pinv(C)
        # consistency of Cx = e
        res = C @ (pinv @ e) - e
        if np.linalg.norm(res) > 1e-9 * (1.0 + np.linalg.norm(e)):
            raise InfeasibleSetError("affine system Cx = e is inconsistent",
                                     residual=float(np.linalg.norm(res)))
        self.C, self.e, self.dim = C, e, C.shape[1]
        self._pinv = pinv

    def project(self, x):
        x = self._check_dim(x)
        return x - self._pinv @ (self.C @ x - self.e)

    def constraint_rows(self, n):
        G, h = _empty_rows(n)
        return G, h, self.C, self.e

    def to_dict(self):
        return {"type": "affine", "C": self.C.tolist(), "e": self.e.tolist()}


class Ball(ProjectionOperator):
    """Euclidean ball of radius ``radius`` around ``center``."""

    def __init__(self, center, radius):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if radius < 0:
            raise InfeasibleSetError("ball radius is negative", residual=-float(radius))
        self.center, self.radius, self.dim = center, float(radius), center.shape[0]

    def project(self, x):
        x = self._check_dim(x)
        d = x - self.center
        nrm = np.linalg.norm(d)
        if nrm <= self.radius:
            return x.copy()
        return self.center + (self.radius / nrm) * d

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


def _nnls(M, d, max_iter=500):
    """Lawson-Hanson active-set solution of ``min ||M u - d||`` over ``u >= 0``."""
    m, k = M.shape
    u = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    tol = 10 * np.finfo(float).eps * np.abs(M).sum(axis=0).max(initial=0.0) * max(m, k)
    w = M.T @ d
    for _ in range(max_iter):
        if passive.all() or w[~passive].max() <= tol:
            break
        j = int(np.argmax(np.where(passive, -np.inf, w)))
        passive[j] = True
        while True:
            s = np.zeros(k)
            s[passive] = np.linalg.lstsq(M[:, passive], d, rcond=None)[0]
            if not passive.any() or s[passive].min() > 0:
                break
            # step back to the boundary and release the coordinates that hit zero
            blocked = passive & (s <= 0)
            alpha = np.min(u[blocked] / (u[blocked] - s[blocked]))
            u = u + alpha * (s - u)
            passive &= u > tol
            u[~passive] = 0.0
        u = s
        w = M.T @ (d - M @ u)
    return u


class _ExactPolyhedralProjector:
    """Exact projection onto ``{Gx <= h, Ex = e}``.

    The last verified active set is reused while it still certifies the KKT
    conditions (primal feasibility and nonnegative multipliers), which is the
    common case inside slowly moving iterations. Otherwise the least-distance
    problem is solved with NNLS (Lawson-Hanson) and its active set is
    factorized for the next call. The cache only changes speed, never the
    certified result.
    """

    def __init__(self, G, h, E, e, feas_tol=1e-10, mult_tol=1e-10):
        self.G, self.h, self.E, self.e = G, h, E, e
        self.n = G.shape[1] if G.size else E.shape[1]
        self.feas_tol = feas_tol
        self.mult_tol = mult_tol
        self._feas_bound = feas_tol * (1.0 + np.abs(h))
        self._cache = None
        # stacked least-distance rows: inequalities then each equality twice
        self._Ghat = np.vstack([G, E, -E])
        self._hhat = np.concatenate([h, e, -e])

    def __call__(self, v):
        entry = self._cache
        if entry is not None:
            x = self._apply(entry, v)
            if x is not None:
                return x
        x, active = self._least_distance(v)
        entry = self._factor(active)
        if entry is not None:
            x2 = self._apply(entry, v)
            if x2 is not None:
                self._cache = entry
                return x2
        return x

    def _least_distance(self, v):
        # min ||w|| s.t. (-Ghat) w >= Ghat v - hhat, then x = v + w
        Gh, hh = self._Ghat, self._hhat
        n = self.n
        f = Gh @ v - hh
        M = np.vstack([-Gh.T, f[None, :]])
        d = np.zeros(n + 1)
        d[n] = 1.0
        u = _nnls(M, d, max_iter=max(50 * M.shape[1], 500))
        r = M @ u - d
        if abs(r[n]) < 1e-14 or np.linalg.norm(r) < 1e-12:
            raise InfeasibleSetError("polyhedron is empty (least-distance problem infeasible)",
                                     residual=float(np.max(f)))
        x = v - r[:n] / r[n]
        viol = np.max(self.G @ x - self.h, initial=0.0)
        if self.E.size:
            viol = max(viol, float(np.max(np.abs(self.E @ x - self.e))))
        if viol > 1e-6 * (1.0 + np.max(np.abs(hh), initial=0.0)):
            raise InfeasibleSetError("polyhedron appears empty", residual=float(viol))
        m_in = self.G.shape[0]
        active = np.flatnonzero(u[:m_in] > 0.0)
        return x, active

    def _factor(self, active):
        K = np.vstack([self.E, self.G[active]])
        k = np.concatenate([self.e, self.h[active]])
        n_eq = self.E.shape[0]
        if K.shape[0] == 0:
            return (np.vstack([np.eye(self.n), self.G]),
                    np.concatenate([np.zeros(self.n), -self.h]), self.n)
        KKt = K @ K.T
        if K.shape[0] > self.n or np.linalg.cond(KKt) > 1e12:
            return None
        # multipliers lam = P v - c, projection x = M v + c0
        P = np.linalg.solve(KKt, K)
        c = np.linalg.solve(KKt, k)
        M = np.eye(self.n) - K.T @ P
        c0 = K.T @ c
        # one stacked map yields x, the inequality multipliers and G x - h
        B = np.vstack([M, P[n_eq:], self.G @ M])
        off = np.concatenate([c0, -c[n_eq:], self.G @ c0 - self.h])
        return (B, off, self.n + len(active))

    def _apply(self, entry, v):
        B, off, split = entry
        y = B @ v + off
        mu = y[self.n:split]
        if mu.size and mu.min() < -self.mult_tol * (1.0 + np.abs(mu).max()):
            return None
        if (y[split:] > self._feas_bound).any():
            return None
        return y[:self.n]


class Intersection(ProjectionOperator):
    """Projection onto the intersection of convex sets.

    Parameters
    ----------
    sets : list of ProjectionOperator
        Component sets, all acting on the same space.
    tol : float
        Dykstra stops when the iterate and its correction terms each move
        less than ``tol`` in one sweep.
    max_sweeps : int
        Dykstra sweep budget.
    method : {"dykstra", "exact"}
        ``"exact"`` requires every component to be polyhedral.
    feas_tol : float
        Largest component distance accepted at exit; beyond it the
        intersection is reported empty.
    """

    def __init__(self, sets, tol=1e-10, max_sweeps=10_000, method="dykstra", feas_tol=1e-6):
        sets = list(sets)
        if not sets:
            raise ConfigError("an intersection needs at least one set")
        dims = {s.dim for s in sets if s.dim is not None}
        if len(dims) > 1:
            raise DimensionError(f"component sets act on different spaces: {sorted(dims)}")
        if method not in ("dykstra", "exact"):
            raise ConfigError(f"unknown intersection method {method!r}")
        self.sets = sets
        self.dim = dims.pop() if dims else None
        self.tol, self.max_sweeps = tol, int(max_sweeps)
        self.method, self.feas_tol = method, feas_tol
        self.polyhedral = all(s.polyhedral for s in sets)
        self.last_sweeps = None
        self._exact = None
        if method == "exact":
            if not self.polyhedral:
                raise ConfigError("method='exact' requires polyhedral component sets")
            if self.dim is None:
                raise DimensionError("method='exact' needs at least one set with a known dimension")
            G, h, E, e = self.constraint_rows(self.dim)
            self._exact = _ExactPolyhedralProjector(G, h, E, e)

    def constraint_rows(self, n):
        rows = [s.constraint_rows(n) for s in self.sets]
        G = np.vstack([r[0] for r in rows])
        h = np.concatenate([r[1] for r in rows])
        E = np.vstack([r[2] for r in rows])
        e = np.concatenate([r[3] for r in rows])
        return G, h, E, e

    def project(self, x):
        x = self._check_dim(x)
        if self._exact is not None:
            return self._exact(x)
        return self._dykstra(x)

    def _dykstra(self, v):
        x = v.copy()
        incr = [np.zeros_like(v) for _ in self.sets]
        converged = False
        for sweep in range(1, self.max_sweeps + 1):
            x_prev = x
            moved = 0.0
            for k, s in enumerate(self.sets):
                y = x + incr[k]
                x = s.project(y)
                # x can return to the same point while the corrections still drift
                moved += float(np.sum((y - x - incr[k]) ** 2))
                incr[k] = y - x
            if np.linalg.norm(x - x_prev) <= self.tol and moved <= self.tol ** 2:
                converged = True
                break
        self.last_sweeps = sweep
        residual = self.residual(x)
        if residual > self.feas_tol:
            raise InfeasibleSetError(
                f"Dykstra left a component residual of {residual:.3e} after {sweep} sweeps; "
                "the intersection looks empty", residual=residual)
        if not converged:
            warnings.warn(f"Dykstra hit max_sweeps={self.max_sweeps} (residual {residual:.2e})",
                          RuntimeWarning, stacklevel=3)
        return x

    def residual(self, x):
        """Largest distance from ``x`` to any component set."""
        return max(float(np.linalg.norm(x - s.project(x))) for s in self.sets)

    def to_dict(self):
        return {"type": "intersection", "sets": [s.to_dict() for s in self.sets],
                "tol": self.tol, "max_sweeps": self.max_sweeps, "method": self.method}


def project(op, x):
    """Project ``x`` with ``op`` (``None`` means no constraint)."""
    if op is None:
        return np.array(x, dtype=float)
    return op.project(x)


def is_nonempty(op, n=None):
    """LP feasibility check for a polyhedral operator."""
    n = n if n is not None else op.dim
    G, h, E, e = op.constraint_rows(n)
    res = linprog(np.zeros(n), A_ub=G if G.size else None, b_ub=h if G.size else None,
                  A_eq=E if E.size else None, b_eq=e if E.size else None,
                  bounds=[(None, None)] * n, method="highs")
    return res.status == 0


@dataclass(frozen=True)
class DemandResponseLoad:
    """Parameters of one flexible load.

    The state evolves as ``s[t+1] = a s[t] + b u[t]`` from ``s[1] = s1``;
    consumption ``u`` must stay in ``u_bounds``, every state ``s[2..T+1]`` in
    ``s_bounds``, and total consumption must equal ``total``.
    """

    a: float
    b: float
    s1: float
    total: float
    T: int
    u_bounds: tuple = (0.0, 1.0)
    s_bounds: tuple = (0.0, 10.0)

    def state_rows(self):
        """Coefficients ``C`` and offsets ``o`` with states ``s[2..T+1] = C u + o``."""
        T = self.T
        powers = self.a ** np.arange(T + 1)
        C = np.zeros((T, T))
        for tau in range(1, T + 1):
            # coefficient of u_j in s_{tau+1} is b a^(tau-j)
            C[tau - 1, :tau] = self.b * powers[tau - np.arange(1, tau + 1)]
        offset = powers[1:] * self.s1
        return C, offset

    def states(self, u):
        C, offset = self.state_rows()
        return C @ np.asarray(u, dtype=float) + offset

    def feasible_set(self, method="exact", tol=1e-10, max_sweeps=10_000):
        C, offset = self.state_rows()
        s_lo, s_hi = self.s_bounds
        sets = [Box(self.u_bounds[0], self.u_bounds[1], dim=self.T)]
        for tau in range(self.T):
            sets.append(Halfspace(C[tau], s_hi - offset[tau]))
            sets.append(Halfspace(-C[tau], offset[tau] - s_lo))
        sets.append(AffineEquality(np.ones((1, self.T)), [self.total]))
        return Intersection(sets, tol=tol, max_sweeps=max_sweeps, method=method)


def project_feasible_demand_response(load, u, method="exact"):
    """Project a consumption profile onto the feasible set of ``load``."""
    return load.feasible_set(method=method).project(u)


def set_from_dict(doc, dim=None):
    """Build an operator from its JSON document (see README for the schema)."""
    if doc is None:
        return None
    try:
        kind = doc["type"]
        if kind == "free":
            return Free(dim)
        if kind == "box":
            return Box(doc["lo"], doc["hi"], dim=dim)
        if kind == "orthant":
            return NonnegativeOrthant(dim)
        if kind == "halfspace":
            return Halfspace(doc["a"], doc["beta"])
        if kind == "affine":
            return AffineEquality(doc["C"], doc["e"])
        if kind == "ball":
            return Ball(doc["center"], doc["radius"])
        if kind == "intersection":
            subs = [set_from_dict(s, dim) for s in doc["sets"]]
            return Intersection(subs, tol=doc.get("tol", 1e-10),
                                max_sweeps=doc.get("max_sweeps", 10_000),
                                method=doc.get("method", "dykstra"))
    except KeyError as exc:
        raise ConfigError(f"constraint set document is missing {exc}") from exc
    raise ConfigError(f"unknown constraint set type {doc.get('type')!r}")
