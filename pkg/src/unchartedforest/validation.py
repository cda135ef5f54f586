"""Input-checking helpers shared across the package."""

from __future__ import annotations

import numpy as np


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite, C-contiguous float64 matrix with >= 1 row and column."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D matrix, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains NaN or infinite entries")
    return X


def check_square(P, name: str = "matrix") -> np.ndarray:
    P = check_matrix(P, name)
    if P.shape[0] != P.shape[1]:
        raise ValueError(f"{name} must be square, got shape {P.shape}")
    return P


def check_affinity(P, tol: float = 1e-12) -> np.ndarray:
    """Validate the affinity-matrix contract: symmetric, unit diagonal, entries in [0, 1]."""
    P = check_square(P, "affinity matrix")
    if np.abs(P - P.T).max() > tol:
        raise ValueError("affinity matrix is not symmetric")
    if (np.diag(P) != 1.0).any():
        raise ValueError("affinity matrix diagonal must be exactly 1")
    if P.min() < 0.0 or P.max() > 1.0:
        raise ValueError("affinity entries must lie in [0, 1]")
    return P


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)
