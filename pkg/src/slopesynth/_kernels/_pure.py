"""Pure-Python (numpy) kernels; same contracts as the compiled module."""

from __future__ import annotations

import numpy as np

from ..exceptions import SingularityError

BACKEND_NAME = "python"

# a pivot this far below the original diagonal counts as rank deficiency
_PIVOT_RTOL = 1e-13


def _chol(matrix: np.ndarray, what: str) -> np.ndarray:
    try:
        low = np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise SingularityError(f"{what} is not positive-definite") from None
    pivots = np.diag(low) ** 2
    if np.any(pivots <= _PIVOT_RTOL * np.diag(matrix)):
        raise SingularityError(f"{what} is numerically rank-deficient")
    return low


def ols_batch(x: np.ndarray, y: np.ndarray, starts: np.ndarray):
    """Least-squares fit of each row segment of a stacked design matrix.

    ``starts`` holds the k+1 segment boundaries.  Returns per-segment
    coefficient vectors, inverse cross-product matrices, and residual sums
    of squares, as arrays of shape (k, m), (k, m, m) and (k,).
    """
    x = np.ascontiguousarray(x, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    starts = np.asarray(starts, dtype=np.int64)
    k = starts.shape[0] - 1
    m = x.shape[1]
    coef = np.empty((k, m))
    xtx_inv = np.empty((k, m, m))
    rss = np.empty(k)
    eye = np.eye(m)
    for s in range(k):
        xs = x[starts[s]:starts[s + 1]]
        ys = y[starts[s]:starts[s + 1]]
        if xs.shape[0] <= m:
            raise SingularityError(
                f"segment {s}: {xs.shape[0]} rows cannot support {m} coefficients"
            )
        low = _chol(xs.T @ xs, f"cross-product matrix of segment {s}")
        low_inv = np.linalg.solve(low, eye)
        inv = low_inv.T @ low_inv
        b = inv @ (xs.T @ ys)
        resid = ys - xs @ b
        coef[s] = b
        xtx_inv[s] = inv
        rss[s] = resid @ resid
    return coef, xtx_inv, rss


def stacked_gls(coef: np.ndarray, cov: np.ndarray):
    """Identity-stack GLS pool of k same-length coefficient vectors.

    ``coef`` is (k, m); ``cov`` holds the k per-study (m, m) weight blocks.
    Returns the pooled coefficients, their covariance, the residual
    homogeneity quadratic form, and the null quadratic form of the pooled
    vector itself.
    """
    coef = np.asarray(coef, dtype=float)
    cov = np.asarray(cov, dtype=float)
    k, m = coef.shape
    eye = np.eye(m)
    normal = np.zeros((m, m))
    rhs = np.zeros(m)
    inv_blocks = np.empty((k, m, m))
    for s in range(k):
        low = _chol(cov[s], f"weight block {s}")
        low_inv = np.linalg.solve(low, eye)
        inv = low_inv.T @ low_inv
        inv_blocks[s] = inv
        normal += inv
        rhs += inv @ coef[s]
    low = _chol(normal, "pooled normal matrix")
    low_inv = np.linalg.solve(low, eye)
    cov_beta = low_inv.T @ low_inv
    beta = cov_beta @ rhs
    q_e = 0.0
    for s in range(k):
        r = coef[s] - beta
        q_e += float(r @ inv_blocks[s] @ r)
    q_b = float(beta @ normal @ beta)
    return beta, cov_beta, max(q_e, 0.0), q_b
