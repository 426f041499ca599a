"""Communication graphs with doubly stochastic mixing weights."""

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ._validation import check_random_state
from .exceptions import AssumptionViolationError, ConfigError


@dataclass
class NetworkReport:
    """Result of :func:`validate`. Violations are data, never exceptions."""

    row_sum_err: float
    col_sum_err: float
    min_weight: float
    n_components: int
    contraction: float
    violations: list = field(default_factory=list)

    @property
    def valid(self):
        return not self.violations

    def to_dict(self):
        return {"valid": self.valid, "row_sum_err": self.row_sum_err,
                "col_sum_err": self.col_sum_err, "min_weight": self.min_weight,
                "n_components": self.n_components, "contraction": self.contraction,
                "violations": list(self.violations)}


class CommNetwork:
    """Directed communication graph with weights ``W``.

    ``W[i, j] > 0`` means agent ``i`` receives from agent ``j``. Mixing
    (``W @ Z`` channel by channel) is carried out in extended precision with
    a sequential sum over ``j`` in ascending order. Absent edges contribute
    exact zeros, so row ``i`` equals the sum over its in-neighbors taken in
    ascending order, whatever the partition of agents among workers.

    Parameters
    ----------
    W : array-like of shape (N, N)
    tol : float, default=1e-12
        Zero threshold for weights.
    """

    def __init__(self, W, tol=1e-12):
        W = np.array(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ConfigError(f"weight matrix must be square, got shape {W.shape}")
        W.setflags(write=False)
        self.W = W
        self.tol = tol
        N = W.shape[0]
        nbrs = [np.flatnonzero(np.abs(W[i]) > tol) for i in range(N)]
        width = max(len(nb) for nb in nbrs)
        self._nbr = np.zeros((N, width), dtype=np.intp)
        self._wt = np.zeros((N, width))
        for i, nb in enumerate(nbrs):
            self._nbr[i, :len(nb)] = nb
            self._nbr[i, len(nb):] = i
            self._wt[i, :len(nb)] = W[i, nb]
        self.in_neighbors = [tuple(int(j) for j in nb) for nb in nbrs]
        self._W_ext = W.astype(np.longdouble)
        self._wt_ext = self._wt.astype(np.longdouble)
        self._report = None

    @property
    def N(self):
        return self.W.shape[0]

    @property
    def edges(self):
        """Directed edges ``(j, i)`` with ``j != i``: ``i`` receives from ``j``."""
        return sorted((j, i) for i in range(self.N) for j in self.in_neighbors[i] if j != i)

    def self_weights(self):
        return np.diag(self.W).copy()

    def mix(self, Z, start=0, stop=None):
        """Rows ``start .. stop-1`` of ``W @ Z`` in extended precision, shape ``(k, c)``.

        Non-BLAS matmul sums sequentially over ``j``, matching
        :meth:`mix_sparse` bit for bit.
        """
        stop = self.N if stop is None else stop
        return self._W_ext[start:stop] @ np.asarray(Z, dtype=np.longdouble)

    def mix_sparse(self, Z, start=0, stop=None):
        """Same as :meth:`mix`, reading only in-neighbor rows through the padded table."""
        stop = self.N if stop is None else stop
        Z = np.asarray(Z, dtype=np.longdouble)
        nbr, wt = self._nbr[start:stop], self._wt_ext[start:stop]
        out = wt[:, 0, None] * Z[nbr[:, 0]]
        for k in range(1, nbr.shape[1]):
            out = out + wt[:, k, None] * Z[nbr[:, k]]
        return out

    def report(self):
        if self._report is None:
            self._report = validate(self)
        return self._report

    @property
    def contraction(self):
        """``||W - 11^T/N||_2``, the consensus contraction factor."""
        return self.report().contraction

    def to_dict(self):
        return {"topology": "explicit", "W": self.W.tolist()}

    def __repr__(self):
        return f"CommNetwork(N={self.N}, edges={len(self.edges)})"


def validate(network, tol=1e-12):
    """Check the standing assumptions on a weight matrix.

    Returns a :class:`NetworkReport` with row/column-sum errors, the smallest
    entry, the number of strongly connected components and the contraction
    factor ``||W - 11^T/N||_2``, which bounds ``||W z||/||z||`` on vectors
    with zero mean.
    """
    W = network.W if isinstance(network, CommNetwork) else np.asarray(network, dtype=float)
    N = W.shape[0]
    row_err = float(np.max(np.abs(W.sum(axis=1) - 1)))
    col_err = float(np.max(np.abs(W.sum(axis=0) - 1)))
    min_w = float(W.min())
    n_comp, labels = connected_components(csr_matrix(np.abs(W) > tol), directed=True,
                                          connection="strong")
    contraction = float(np.linalg.norm(W - np.full((N, N), 1.0 / N), 2))
    violations = []
    if row_err > tol:
        violations.append(f"row sums deviate from 1 by {row_err:.3e}")
    if col_err > tol:
        violations.append(f"column sums deviate from 1 by {col_err:.3e}")
    if min_w < -tol:
        violations.append(f"negative weight {min_w:.3e}")
    if n_comp > 1:
        comps = [np.flatnonzero(labels == c).tolist() for c in range(n_comp)]
        violations.append(f"graph is not strongly connected: components {comps}")
    return NetworkReport(row_err, col_err, min_w, int(n_comp), contraction, violations)


def from_weights(W, require_valid=True):
    """Wrap a user-supplied weight matrix, rejecting it if it violates the assumptions."""
    net = CommNetwork(W)
    if require_valid and not net.report().valid:
        raise AssumptionViolationError("; ".join(net.report().violations))
    return net


def build_metropolis(edges, N):
    """Metropolis weights ``w_ij = 1/(1 + max(deg_i, deg_j))`` on an undirected graph.

    Raises
    ------
    AssumptionViolationError
        If the graph is disconnected; the message lists the components.
    """
    N = int(N)
    deg = np.zeros(N, dtype=int)
    und = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            continue
        if not (0 <= i < N and 0 <= j < N):
            raise ConfigError(f"edge ({i}, {j}) outside 0..{N - 1}")
        und.add((min(i, j), max(i, j)))
    for i, j in und:
        deg[i] += 1
        deg[j] += 1
    adj = np.zeros((N, N), dtype=bool)
    for i, j in und:
        adj[i, j] = adj[j, i] = True
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)
    if n_comp > 1:
        comps = [np.flatnonzero(labels == c).tolist() for c in range(n_comp)]
        raise AssumptionViolationError(f"graph is disconnected: components {comps}")
    W = np.zeros((N, N))
    for i, j in sorted(und):
        W[i, j] = W[j, i] = 1.0 / (1 + max(deg[i], deg[j]))
    for i in range(N):
        W[i, i] = 1.0 - np.sum(W[i, np.arange(N) != i])
    return CommNetwork(W)


def build_complete(N):
    """Complete graph with every weight ``1/N``."""
    return CommNetwork(np.full((N, N), 1.0 / N))


def build_ring(N, self_weight=0.5):
    """Bidirectional ring: self weight ``s`` and ``(1 - s)/2`` to each neighbor.

    For ``N = 2`` the two neighbors coincide and the off-diagonal weight is
    ``1 - s``.
    """
    if N < 2:
        raise ConfigError("a ring needs at least two agents")
    if not 0 < self_weight < 1:
        raise ConfigError("self_weight must lie in (0, 1)")
    W = np.zeros((N, N))
    side = (1.0 - self_weight) / 2
    for i in range(N):
        W[i, i] = self_weight
        W[i, (i + 1) % N] += side
        W[i, (i - 1) % N] += side
    return CommNetwork(W)


def build_erdos_renyi(N, p, seed=None, max_retries=1000):
    """Connected undirected Erdos-Renyi graph with Metropolis weights.

    Redraws until the sample is connected.

    Raises
    ------
    AssumptionViolationError
        When ``max_retries`` draws are all disconnected.
    """
    if not 0 < p <= 1:
        raise ConfigError("edge probability must lie in (0, 1]")
    rng = check_random_state(seed)
    iu, ju = np.triu_indices(N, k=1)
    for _ in range(max_retries):
        keep = rng.uniform(size=iu.size) < p
        edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
        adj = np.zeros((N, N), dtype=bool)
        adj[iu[keep], ju[keep]] = True
        if N == 1 or connected_components(csr_matrix(adj), directed=False)[0] == 1:
            return build_metropolis(edges, N)
    raise AssumptionViolationError(
        f"no connected graph after {max_retries} draws with p={p}; try a larger p")


def network_from_dict(doc, N=None, seed=None):
    """Build a network from ``{"topology": ..., ...}``.

    Topologies: ``ring`` (``self_weight``), ``erdos_renyi`` (``p``, ``seed``),
    ``complete`` and ``explicit`` (``W``).
    """
    topo = doc.get("topology")
    N = doc.get("N", N)
    seed = doc.get("seed", seed)
    if topo == "explicit":
        return from_weights(doc["W"])
    if N is None:
        raise ConfigError("network document needs N")
    if topo == "ring":
        return build_ring(N, doc.get("self_weight", 0.5))
    if topo == "erdos_renyi":
        return build_erdos_renyi(N, doc.get("p", 0.3), seed)
    if topo == "complete":
        return build_complete(N)
    raise ConfigError(f"unknown topology {topo!r}")
