"""Per-iteration metric records and their CSV form."""

import io
import math

import numpy as np

TIMING_COLUMNS = ("wall_ns",)


def exact_column_sums(Z):
    """Correctly rounded column sums of a 2-D array (independent of row order).

    Extended-precision input is split into a double head and tail first so
    that no digits are lost before summation.
    """
    Z = np.asarray(Z)
    hi = Z.astype(float)
    if Z.dtype == np.float64:
        return np.array([math.fsum(hi[:, c]) for c in range(Z.shape[1])])
    lo = (Z - hi).astype(float)
    return np.array([math.fsum(np.concatenate([hi[:, c], lo[:, c]]))
                     for c in range(Z.shape[1])])


def column_sums(Z):
    """Column sums accumulated in extended precision (cheap metric path)."""
    return np.asarray(Z).sum(axis=0, dtype=np.longdouble)


class Trace:
    """Growing table of per-iteration metrics.

    Parameters
    ----------
    columns : sequence of str
    record_states : bool, default=False
        Also keep a copy of every engine state (needed by
        :func:`aggnash.oracles.sp_diagnostics`).
    """

    def __init__(self, columns, record_states=False):
        self.columns = tuple(columns)
        self._rows = []
        self.record_states = record_states
        self.states = [] if record_states else None

    def append(self, row, state=None):
        self._rows.append(tuple(float(row[c]) for c in self.columns))
        if self.record_states and state is not None:
            self.states.append(state)

    def __len__(self):
        return len(self._rows)

    def as_array(self):
        if not self._rows:
            return np.zeros((0, len(self.columns)))
        return np.array(self._rows, dtype=float)

    def __getitem__(self, name):
        return self.as_array()[:, self.columns.index(name)]

    def last(self):
        return dict(zip(self.columns, self._rows[-1]))

    def to_csv(self, path=None, header=None, include_timing=True, extra=None):
        """Write the table with ``%.17g`` floats (round-trips exactly).

        ``header`` lines are written first as ``#`` comments; ``extra`` maps
        additional constant columns (for example the trial index) placed
        before the metric columns.
        """
        cols = [c for c in self.columns if include_timing or c not in TIMING_COLUMNS]
        idx = [self.columns.index(c) for c in cols]
        extra = extra or {}
        buf = io.StringIO()
        for line in (header or []):
            buf.write(f"# {line}\n")
        buf.write(",".join(list(extra) + cols) + "\n")
        prefix = "".join(f"{v}," for v in extra.values())
        for row in self._rows:
            buf.write(prefix + ",".join(_fmt(row[k]) for k in idx) + "\n")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def _fmt(v):
    if math.isfinite(v) and v == int(v) and abs(v) < 2 ** 53:
        return str(int(v))
    return "%.17g" % v


def read_csv(path):
    """Read a trace CSV back as ``(columns, array, header_lines)``."""
    header = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    k = 0
    while k < len(lines) and lines[k].startswith("#"):
        header.append(lines[k][1:].strip())
        k += 1
    cols = lines[k].split(",")
    data = [[float(v) for v in ln.split(",")] for ln in lines[k + 1:] if ln]
    arr = np.array(data, dtype=float).reshape(-1, len(cols))
    return cols, arr, header
