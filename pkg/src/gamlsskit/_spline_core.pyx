# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Banded kernels for penalised cubic B-spline smoothing.

All symmetric matrices are stored as lower bands of width 4:
``M[d, j] = A[j + d, j]`` for ``d = 0..3``.  The system matrix is
``G + lam * O`` with ``G`` the weighted Gram matrix of the basis at the
knots and ``O`` the roughness penalty.
"""
import numpy as np

cdef int _ldl(const double[:, ::1] G, const double[:, ::1] O, double lam,
              double[:, ::1] L, double[::1] D) noexcept nogil:
    cdef Py_ssize_t K = G.shape[1]
    cdef Py_ssize_t i, j, k, lo
    cdef double s
    for j in range(K):
        s = G[0, j] + lam * O[0, j]
        lo = j - 3 if j >= 3 else 0
        for k in range(lo, j):
            s -= L[j - k, k] * L[j - k, k] * D[k]
        if not (s > 0.0):
            return -1
        D[j] = s
        for i in range(j + 1, min(j + 4, K)):
            s = G[i - j, j] + lam * O[i - j, j]
            lo = i - 3 if i >= 3 else 0
            for k in range(lo, j):
                s -= L[i - k, k] * L[j - k, k] * D[k]
            L[i - j, j] = s / D[j]
    return 0


def band_solve(double[:, ::1] G, double[:, ::1] O, double[::1] rhs, double lam):
    """Solve ``(G + lam * O) c = rhs``."""
    cdef Py_ssize_t K = G.shape[1]
    cdef Py_ssize_t i, k, lo
    L_arr = np.zeros((4, K))
    D_arr = np.zeros(K)
    z_arr = np.array(rhs, dtype=np.float64, copy=True)
    cdef double[:, ::1] L = L_arr
    cdef double[::1] D = D_arr
    cdef double[::1] z = z_arr
    cdef int status
    with nogil:
        status = _ldl(G, O, lam, L, D)
    if status != 0:
        raise FloatingPointError("banded system is not positive definite")
    with nogil:
        for i in range(K):
            lo = i - 3 if i >= 3 else 0
            for k in range(lo, i):
                z[i] -= L[i - k, k] * z[k]
        for i in range(K):
            z[i] /= D[i]
        for i in range(K - 1, -1, -1):
            for k in range(i + 1, min(i + 4, K)):
                z[i] -= L[k - i, i] * z[k]
    return z_arr


cdef inline double _sig(double[:, ::1] S, Py_ssize_t i, Py_ssize_t k) noexcept nogil:
    if i >= k:
        return S[i - k, k]
    return S[k - i, i]


def band_trace(double[:, ::1] G, double[:, ::1] O, double lam):
    """``trace((G + lam * O)^-1 G)`` from the band of the inverse."""
    cdef Py_ssize_t K = G.shape[1]
    cdef Py_ssize_t i, j, k, d, hi
    L_arr = np.zeros((4, K))
    D_arr = np.zeros(K)
    S_arr = np.zeros((4, K))
    cdef double[:, ::1] L = L_arr
    cdef double[::1] D = D_arr
    cdef double[:, ::1] S = S_arr
    cdef double s, acc = 0.0
    cdef int status
    with nogil:
        status = _ldl(G, O, lam, L, D)
    if status != 0:
        raise FloatingPointError("banded system is not positive definite")
    with nogil:
        for j in range(K - 1, -1, -1):
            hi = min(j + 4, K)
            for i in range(j + 1, hi):
                s = 0.0
                for k in range(j + 1, hi):
                    s -= L[k - j, j] * _sig(S, i, k)
                S[i - j, j] = s
            s = 1.0 / D[j]
            for k in range(j + 1, hi):
                s -= L[k - j, j] * S[k - j, j]
            S[0, j] = s
        for j in range(K):
            acc += S[0, j] * G[0, j]
            for d in range(1, 4):
                if j + d < K:
                    acc += 2.0 * S[d, j] * G[d, j]
    return acc
