"""Input validation helpers shared across the public API surface."""

from __future__ import annotations

import numpy as np


def check_vector(v, dim=None, name="vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array, optionally of length ``dim``."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name}: expected a 1-D vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name}: expected length {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: entries must be finite")
    return arr


def check_matrix(m, cols=None, name="matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array, optionally with ``cols`` columns."""
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-D array, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise ValueError(f"{name}: expected {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: entries must be finite")
    return arr


def check_positive(x, name="value") -> float:
    x = float(x)
    if not x > 0:
        raise ValueError(f"{name}: must be > 0, got {x}")
    return x


def check_probability(x, name="value") -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name}: must lie in [0, 1], got {x}")
    return x


def check_stepsize(tau, dim=None, name="stepsize"):
    """Stepsizes may be a positive scalar or a per-coordinate positive vector."""
    arr = np.asarray(tau, dtype=float)
    if arr.ndim == 0:
        if not arr > 0:
            raise ValueError(f"{name}: must be > 0, got {float(arr)}")
        return float(arr)
    vec = check_vector(arr, dim=dim, name=name)
    if not np.all(vec > 0):
        raise ValueError(f"{name}: all entries must be > 0")
    return vec
