"""Round scheduling, locality guard and divergence checks shared by the engines."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .exceptions import AssumptionViolationError, DimensionError

DIVERGENCE_NORM = 1e150

# Trackers are stored and mixed in extended precision: their column sums must
# stay at zero over tens of thousands of rounds, and float64 rounding alone
# drifts by ~1e-9 at the magnitudes met in practice.
TRACKER_DTYPE = np.longdouble


def partition(N, n_workers):
    """Split ``range(N)`` into at most ``n_workers`` contiguous chunks."""
    n_workers = max(1, min(int(n_workers or 1), N))
    bounds = np.linspace(0, N, n_workers + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


class RoundScheduler:
    """Run a per-chunk function over all agent chunks, sequentially or on threads.

    Each call is a barrier: every chunk finishes before the next phase
    starts. Chunks write disjoint rows, so the result does not depend on
    the number of workers.
    """

    def __init__(self, N, n_workers=None):
        self.parts = partition(N, n_workers)
        self._pool = ThreadPoolExecutor(len(self.parts)) if len(self.parts) > 1 else None

    def __call__(self, fn):
        if self._pool is None:
            for a, b in self.parts:
                fn(a, b)
            return
        for fut in [self._pool.submit(fn, a, b) for a, b in self.parts]:
            fut.result()

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class LocalityGuard:
    """Records every cross-agent read made during guarded rounds.

    A read of ``key`` owned by agent ``j`` on behalf of agent ``i`` is
    allowed when ``j`` is an in-neighbor of ``i`` (or ``i`` itself) and
    ``key`` is one of the published message fields.
    """

    def __init__(self, network, allowed_keys):
        self.in_neighbors = [set(nb) | {i} for i, nb in enumerate(network.in_neighbors)]
        self.allowed_keys = frozenset(allowed_keys)
        self.reads = []
        self.violations = []

    def read(self, mailbox, reader, owner, key):
        self.reads.append((reader, owner, key))
        if owner not in self.in_neighbors[reader] or key not in self.allowed_keys:
            self.violations.append((reader, owner, key))
        return mailbox[owner][key]


def guarded_mix(guard, mailbox, network, i, key):
    """Row ``i`` of ``W @ Z`` assembled from mailbox reads, same order as ``mix``."""
    # padding slots of the neighbor table add exact zeros, so they are skipped
    width = len(network.in_neighbors[i])
    nbr, wt = network._nbr[i], network._wt_ext[i]
    out = wt[0] * np.asarray(guard.read(mailbox, i, int(nbr[0]), key), dtype=TRACKER_DTYPE)
    for k in range(1, width):
        out = out + wt[k] * np.asarray(guard.read(mailbox, i, int(nbr[k]), key),
                                       dtype=TRACKER_DTYPE)
    return out


def check_network(game, network):
    if network.N != game.N:
        raise DimensionError(f"network has {network.N} agents, game has {game.N}")
    rep = network.report()
    if not rep.valid:
        raise AssumptionViolationError("invalid network: " + "; ".join(rep.violations))


def is_diverged(*arrays):
    for a in arrays:
        # NaN fails the comparison as well
        if a.size and not np.max(np.abs(a)) <= DIVERGENCE_NORM:
            return True
    return False
