# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: per-segment least squares and identity-stack GLS.

Hand-rolled Cholesky routines keep every operation on small matrices free
of per-call dispatch overhead, which dominates when these kernels run tens
of thousands of times inside a simulation loop.  Contracts mirror
``slopesynth._kernels._pure`` exactly.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

from slopesynth.exceptions import SingularityError

cnp.import_array()

BACKEND_NAME = "c"


cdef double _PIVOT_RTOL = 1e-13

cdef int _chol_inplace(double[:, ::1] a, Py_ssize_t m) noexcept nogil:
    """Lower Cholesky factor in place; returns -1 when not numerically SPD.

    A pivot below ``_PIVOT_RTOL`` times the original diagonal entry counts
    as rank deficiency: rounding can leave an exactly singular matrix with
    a tiny positive pivot.
    """
    cdef Py_ssize_t i, j, t
    cdef double acc
    for j in range(m):
        acc = a[j, j]
        for t in range(j):
            acc -= a[j, t] * a[j, t]
        if acc <= 0.0 or acc <= _PIVOT_RTOL * a[j, j]:
            return -1
        a[j, j] = sqrt(acc)
        for i in range(j + 1, m):
            acc = a[i, j]
            for t in range(j):
                acc -= a[i, t] * a[j, t]
            a[i, j] = acc / a[j, j]
    return 0


cdef void _lower_inverse(double[:, ::1] low, double[:, ::1] out, Py_ssize_t m) noexcept nogil:
    """Inverse of a lower-triangular factor (upper part of ``out`` zeroed)."""
    cdef Py_ssize_t i, j, t
    cdef double acc
    for j in range(m):
        for i in range(j):
            out[i, j] = 0.0
        out[j, j] = 1.0 / low[j, j]
        for i in range(j + 1, m):
            acc = 0.0
            for t in range(j, i):
                acc -= low[i, t] * out[t, j]
            out[i, j] = acc / low[i, i]


cdef void _crossprod_lower(double[:, ::1] tri, double[:, ::1] out, Py_ssize_t m) noexcept nogil:
    """out = tri' tri for a lower-triangular ``tri`` (full symmetric result)."""
    cdef Py_ssize_t i, j, t, lo
    cdef double acc
    for i in range(m):
        for j in range(i, m):
            acc = 0.0
            lo = j  # tri[t, i] and tri[t, j] vanish above the diagonal
            for t in range(lo, m):
                acc += tri[t, i] * tri[t, j]
            out[i, j] = acc
            out[j, i] = acc


def ols_batch(double[:, ::1] x, double[::1] y, long long[::1] starts):
    """Least-squares fit of each row segment of a stacked design matrix.

    ``starts`` holds the k+1 segment boundaries.  Returns per-segment
    coefficient vectors, inverse cross-product matrices, and residual sums
    of squares, as arrays of shape (k, m), (k, m, m) and (k,).
    """
    cdef Py_ssize_t k = starts.shape[0] - 1
    cdef Py_ssize_t m = x.shape[1]
    cdef cnp.ndarray coef_arr = np.empty((k, m), dtype=np.float64)
    cdef cnp.ndarray inv_arr = np.empty((k, m, m), dtype=np.float64)
    cdef cnp.ndarray rss_arr = np.empty(k, dtype=np.float64)
    cdef double[:, ::1] coef = coef_arr
    cdef double[:, :, ::1] xtx_inv = inv_arr
    cdef double[::1] rss = rss_arr

    cdef cnp.ndarray work = np.empty((m, m), dtype=np.float64)
    cdef cnp.ndarray tri = np.empty((m, m), dtype=np.float64)
    cdef double[:, ::1] g = work
    cdef double[:, ::1] linv = tri
    cdef cnp.ndarray xty_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] xty = xty_arr

    cdef Py_ssize_t s, i, j, t, lo, hi
    cdef double acc, resid
    cdef int status

    for s in range(k):
        lo = starts[s]
        hi = starts[s + 1]
        if hi - lo <= m:
            raise SingularityError(
                f"segment {s}: {hi - lo} rows cannot support {m} coefficients"
            )
        with nogil:
            for i in range(m):
                for j in range(i, m):
                    acc = 0.0
                    for t in range(lo, hi):
                        acc += x[t, i] * x[t, j]
                    g[i, j] = acc
                    g[j, i] = acc
                acc = 0.0
                for t in range(lo, hi):
                    acc += x[t, i] * y[t]
                xty[i] = acc
            status = _chol_inplace(g, m)
        if status != 0:
            raise SingularityError(
                f"cross-product matrix of segment {s} is not positive-definite"
            )
        with nogil:
            _lower_inverse(g, linv, m)
            _crossprod_lower(linv, xtx_inv[s], m)
            for i in range(m):
                acc = 0.0
                for j in range(m):
                    acc += xtx_inv[s, i, j] * xty[j]
                coef[s, i] = acc
            acc = 0.0
            for t in range(lo, hi):
                resid = y[t]
                for j in range(m):
                    resid -= x[t, j] * coef[s, j]
                acc += resid * resid
            rss[s] = acc
    return coef_arr, inv_arr, rss_arr


def stacked_gls(double[:, ::1] coef, double[:, :, ::1] cov):
    """Identity-stack GLS pool of k same-length coefficient vectors.

    ``coef`` is (k, m); ``cov`` holds the k per-study (m, m) weight blocks.
    Returns the pooled coefficients, their covariance, the residual
    homogeneity quadratic form, and the null quadratic form of the pooled
    vector itself.
    """
    cdef Py_ssize_t k = coef.shape[0]
    cdef Py_ssize_t m = coef.shape[1]
    cdef cnp.ndarray beta_arr = np.empty(m, dtype=np.float64)
    cdef cnp.ndarray cov_beta_arr = np.empty((m, m), dtype=np.float64)
    cdef double[::1] beta = beta_arr
    cdef double[:, ::1] cov_beta = cov_beta_arr

    cdef cnp.ndarray inv_blocks_arr = np.empty((k, m, m), dtype=np.float64)
    cdef double[:, :, ::1] inv_blocks = inv_blocks_arr
    cdef cnp.ndarray work_arr = np.empty((m, m), dtype=np.float64)
    cdef cnp.ndarray tri_arr = np.empty((m, m), dtype=np.float64)
    cdef cnp.ndarray normal_arr = np.zeros((m, m), dtype=np.float64)
    cdef cnp.ndarray rhs_arr = np.zeros(m, dtype=np.float64)
    cdef cnp.ndarray resid_arr = np.empty(m, dtype=np.float64)
    cdef double[:, ::1] work = work_arr
    cdef double[:, ::1] tri = tri_arr
    cdef double[:, ::1] normal = normal_arr
    cdef double[::1] rhs = rhs_arr
    cdef double[::1] resid = resid_arr

    cdef Py_ssize_t s, i, j, t
    cdef double acc, q_e, q_b
    cdef int status

    for s in range(k):
        with nogil:
            for i in range(m):
                for j in range(m):
                    work[i, j] = cov[s, i, j]
            status = _chol_inplace(work, m)
        if status != 0:
            raise SingularityError(f"weight block {s} is not positive-definite")
        with nogil:
            _lower_inverse(work, tri, m)
            _crossprod_lower(tri, inv_blocks[s], m)
            for i in range(m):
                for j in range(m):
                    normal[i, j] += inv_blocks[s, i, j]
                acc = 0.0
                for j in range(m):
                    acc += inv_blocks[s, i, j] * coef[s, j]
                rhs[i] += acc

    with nogil:
        for i in range(m):
            for j in range(m):
                work[i, j] = normal[i, j]
        status = _chol_inplace(work, m)
    if status != 0:
        raise SingularityError("pooled normal matrix is not positive-definite")
    with nogil:
        _lower_inverse(work, tri, m)
        _crossprod_lower(tri, cov_beta, m)
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += cov_beta[i, j] * rhs[j]
            beta[i] = acc

        q_e = 0.0
        for s in range(k):
            for i in range(m):
                resid[i] = coef[s, i] - beta[i]
            for i in range(m):
                acc = 0.0
                for j in range(m):
                    acc += inv_blocks[s, i, j] * resid[j]
                q_e += resid[i] * acc

        q_b = 0.0
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += normal[i, j] * beta[j]
            q_b += beta[i] * acc

    if q_e < 0.0:
        q_e = 0.0
    return beta_arr, cov_beta_arr, q_e, q_b
