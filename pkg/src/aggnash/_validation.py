"""Small argument checks shared by the estimators."""

import numbers

import numpy as np

from .exceptions import AssumptionViolationError


def check_random_state(seed):
    """``numpy.random.Generator`` from ``None``, an int, a SeedSequence or a Generator."""
    return np.random.default_rng(seed)


def check_step(value, name, low=0.0, high=None, high_inclusive=False):
    """Validate a positive step size, optionally bounded above."""
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if value <= low:
        raise ValueError(f"{name} must be > {low}, got {value}")
    if high is not None:
        bad = value > high if high_inclusive else value >= high
        if bad:
            op = "<=" if high_inclusive else "<"
            raise ValueError(f"{name} must be {op} {high}, got {value}")
    return float(value)


def check_nonnegative(arr, name, tol=0.0):
    arr = np.asarray(arr, dtype=float)
    if np.any(arr < -tol):
        raise AssumptionViolationError(f"{name} must be component-wise nonnegative")
    return arr


def check_stop(max_iters, tol):
    if not isinstance(max_iters, numbers.Integral) or max_iters < 0:
        raise ValueError(f"max_iters must be a nonnegative integer, got {max_iters!r}")
    if not (tol >= 0):
        raise ValueError(f"tol must be >= 0, got {tol!r}")
    return int(max_iters), float(tol)
