"""Ragged strategy profiles: one flat buffer plus an offset table."""

import numpy as np

from .exceptions import DimensionError


class RaggedLayout:
    """Block layout of a stacked profile with per-agent dimensions ``dims``.

    Blocks are stored back to back in a flat float array; ``offsets[i]`` is
    the start of block ``i`` and ``offsets[-1]`` the total length.
    """

    def __init__(self, dims):
        dims = [int(k) for k in dims]
        if not dims:
            raise DimensionError("a profile needs at least one agent")
        for i, k in enumerate(dims):
            if k <= 0:
                raise DimensionError(f"agent {i} has non-positive dimension {k}", agent=i)
        self.dims = tuple(dims)
        self.offsets = np.concatenate([[0], np.cumsum(dims)]).astype(np.intp)
        self.uniform = len(set(dims)) == 1

    @property
    def n_agents(self):
        return len(self.dims)

    @property
    def size(self):
        return int(self.offsets[-1])

    def block(self, x, i):
        """View of block ``i`` of the flat profile ``x``."""
        return x[self.offsets[i]:self.offsets[i + 1]]

    def span(self, start, stop):
        """Flat slice covering agents ``start .. stop-1``."""
        return slice(int(self.offsets[start]), int(self.offsets[stop]))

    def split(self, x):
        return [self.block(x, i) for i in range(self.n_agents)]

    def as_matrix(self, x):
        """Reshape to ``(N, n_i)``; only valid for uniform layouts."""
        if not self.uniform:
            raise DimensionError("profile is ragged; no matrix view exists")
        return x.reshape(self.n_agents, self.dims[0])

    def stack(self, blocks):
        """Concatenate per-agent blocks into a validated flat profile."""
        if len(blocks) != self.n_agents:
            raise DimensionError(
                f"expected {self.n_agents} blocks, got {len(blocks)}")
        out = np.empty(self.size)
        for i, blk in enumerate(blocks):
            blk = np.atleast_1d(np.asarray(blk, dtype=float))
            if blk.shape != (self.dims[i],):
                raise DimensionError(
                    f"agent {i}: block has shape {blk.shape}, expected ({self.dims[i]},)",
                    agent=i)
            out[self.offsets[i]:self.offsets[i + 1]] = blk
        return out

    def agent_of_index(self):
        """Agent owning each flat coordinate."""
        return np.repeat(np.arange(self.n_agents), self.dims)

    def check(self, x):
        """Coerce ``x`` (flat array or list of blocks) to a flat float copy."""
        if isinstance(x, (list, tuple)) and len(x) == self.n_agents and any(
                np.ndim(b) >= 1 for b in x):
            return self.stack(x)
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 2 and self.uniform and arr.shape == (self.n_agents, self.dims[0]):
            return arr.reshape(-1).copy()
        if arr.ndim != 1 or arr.shape[0] != self.size:
            # name the first agent whose block cannot be matched
            agent = None
            if arr.ndim == 1:
                agent = int(np.searchsorted(self.offsets[1:], arr.shape[0], side="left"))
                agent = min(agent, self.n_agents - 1)
            raise DimensionError(
                f"profile has shape {arr.shape}, expected ({self.size},) "
                f"for block dims {self.dims}", agent=agent)
        return arr.copy()

    def __eq__(self, other):
        return isinstance(other, RaggedLayout) and self.dims == other.dims

    def __repr__(self):
        return f"RaggedLayout(dims={list(self.dims)})"
