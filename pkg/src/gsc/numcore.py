"""Dense float64 vector/matrix substrate with stable softmax family.

Everything downstream computes in 64-bit floats regardless of what the
container format stores; 32-bit inputs are widened on load. Values are
validated (finite, nonempty) when they enter through ``vector``/``matrix``
and returned as read-only arrays, so they are safe to share across workers.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NonFiniteError


def vector(values) -> np.ndarray:
    """Validate external input as a nonempty finite 1-D float64 array.

    The returned array is read-only.
    """
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"vector must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError("vector must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("vector contains NaN or Inf")
    arr.flags.writeable = False
    return arr


def matrix(values) -> np.ndarray:
    """Validate external input as a finite 2-D float64 array (read-only)."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"matrix must be 2-D, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError("matrix must have positive rows and cols")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("matrix contains NaN or Inf")
    arr.flags.writeable = False
    return arr


def _as_1d(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"{name} must be a nonempty 1-D array")
    return arr


def dot(a, b) -> float:
    a = _as_1d(a, "a")
    b = _as_1d(b, "b")
    if a.shape[0] != b.shape[0]:
        raise DimensionError(f"dot length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(a @ b)


def matvec(m, v) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    v = _as_1d(v, "v")
    if m.ndim != 2:
        raise DimensionError(f"matvec needs a 2-D matrix, got shape {m.shape}")
    if m.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec dim mismatch: {m.shape} x {v.shape}")
    return m @ v


def logsumexp(v) -> float:
    """log(sum(exp(v))), max-shifted so any finite magnitude stays finite."""
    arr = _as_1d(v)
    m = float(np.max(arr))
    return m + float(np.log(np.sum(np.exp(arr - m))))


def softmax(v) -> np.ndarray:
    arr = _as_1d(v)
    e = np.exp(arr - np.max(arr))
    return e / np.sum(e)


def argmax(v) -> int:
    """Index of the maximum; ties break to the lowest index."""
    arr = _as_1d(v)
    return int(np.argmax(arr))
