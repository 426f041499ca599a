import cvxpy as cp
import numpy as np
import pytest
from hypothesis import settings

from aggnash import AgentSpec, AggregativeGame

settings.register_profile("default", deadline=None, max_examples=30)
settings.load_profile("default")


def scalar_game(N=2, check=True, A=None, b=None):
    """``J_i(x_i, s) = x_i^2 / 2 + x_i s`` with ``phi_i = id``.

    ``A`` and ``b`` optionally give every agent the same coupling rows.
    """
    agents = [AgentSpec(dim=1,
                        cost=lambda x, s: 0.5 * x[0] ** 2 + x[0] * s[0],
                        grad1=lambda x, s: np.array([x[0] + s[0]]),
                        grad2=lambda x, s: np.array([x[0]]),
                        phi=lambda x: np.array([x[0]]),
                        phi_jacobian=lambda x: np.ones((1, 1)),
                        A=None if A is None else np.atleast_2d(A),
                        b=None if b is None else np.atleast_1d(b))
              for _ in range(N)]
    return AggregativeGame(agents, 1, check_gradients=check)


def fd_pseudo_gradient(game, x, h=1e-5):
    """Central differences of ``x_i -> J_i(x_i, sigma(x))`` with a plain-sum aggregate.

    Exact up to rounding for quadratic costs; shares no code with the
    library's gradient paths.
    """
    lay = game.layout
    x = np.asarray(x, dtype=float)

    def agg(v):
        return sum(np.asarray(a.phi(lay.block(v, j)), dtype=float)
                   for j, a in enumerate(game.agents)) / game.N

    out = np.empty_like(x)
    for k in range(x.size):
        i = int(np.searchsorted(lay.offsets, k, side="right") - 1)
        e = np.zeros_like(x)
        e[k] = h
        up, dn = x + e, x - e
        out[k] = (game.agents[i].cost(lay.block(up, i), agg(up))
                  - game.agents[i].cost(lay.block(dn, i), agg(dn))) / (2 * h)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def qp_oracle(v, G=None, h=None, E=None, e=None):
    """Dense QP projection onto ``{Gx <= h, Ex = e}`` solved by cvxpy."""
    x = cp.Variable(v.size)
    cons = []
    if G is not None and len(G):
        cons.append(G @ x <= h)
    if E is not None and len(E):
        cons.append(E @ x == e)
    # polishing solves the KKT system of the detected active set exactly
    prob = cp.Problem(cp.Minimize(cp.sum_squares(x - v)), cons)
    prob.solve(solver=cp.OSQP, eps_abs=1e-10, eps_rel=1e-10, polishing=True, max_iter=200_000)
    assert prob.status == cp.OPTIMAL
    return x.value


def random_polytope(rng, n, k):
    # k halfspaces around a random interior point plus a box, so never empty
    c = rng.normal(size=n)
    G = rng.normal(size=(k, n))
    h = G @ c + rng.uniform(0.1, 1.0, size=k)
    return c, G, h

ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    """Store the verdict of acceptance criterion ``number`` for the terminal summary."""
    ACCEPTANCE[number] = (passed, detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  "
                                    f"{detail}")
