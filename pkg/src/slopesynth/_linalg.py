"""Small shared linear-algebra helpers (numpy only, float64 throughout)."""

from __future__ import annotations

import numpy as np

from .exceptions import SingularityError

#: relative tolerance for symmetry checks
SYM_RTOL = 1e-10


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    return arr


def is_symmetric(a: np.ndarray, rtol: float = SYM_RTOL) -> bool:
    scale = np.abs(a).max()
    if scale == 0.0:
        return True
    return bool(np.abs(a - a.T).max() <= rtol * scale)


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def cholesky_spd(a: np.ndarray, context: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix, or ``SingularityError``."""
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(
            f"{context} is not positive-definite: {exc}"
        ) from None


def solve_lower(low: np.ndarray, b: np.ndarray) -> np.ndarray:
    # numpy has no dedicated triangular solve; LU on a triangular matrix is
    # exact and cheap at the block sizes used here.
    return np.linalg.solve(low, b)


def spd_solve(a: np.ndarray, b: np.ndarray, context: str = "matrix") -> np.ndarray:
    """Solve ``a x = b`` for SPD ``a`` via Cholesky."""
    low = cholesky_spd(a, context)
    return solve_lower(low.T, solve_lower(low, b))


def spd_inverse(a: np.ndarray, context: str = "matrix") -> np.ndarray:
    """Inverse of an SPD matrix via its Cholesky factor."""
    low = cholesky_spd(a, context)
    low_inv = solve_lower(low, np.eye(a.shape[0]))
    return low_inv.T @ low_inv


def spd_condition_number(a: np.ndarray) -> float:
    """2-norm condition number of a symmetric PSD matrix."""
    eigvals = np.linalg.eigvalsh(a)
    smallest, largest = eigvals[0], eigvals[-1]
    if largest <= 0.0:
        return np.inf
    if smallest <= 0.0:
        return np.inf
    return float(largest / smallest)
