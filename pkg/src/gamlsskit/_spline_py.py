"""Pure-Python fallback for the banded spline kernels.

Same algorithms and storage as the compiled ``_spline_core`` module:
lower bands ``M[d, j] = A[j + d, j]`` for ``d = 0..3``.
"""
import numpy as np


def _ldl(G, O, lam):
    K = len(G[0])
    L = [[0.0] * K for _ in range(4)]
    D = [0.0] * K
    for j in range(K):
        s = G[0][j] + lam * O[0][j]
        for k in range(max(0, j - 3), j):
            s -= L[j - k][k] * L[j - k][k] * D[k]
        if not s > 0.0:
            raise FloatingPointError("banded system is not positive definite")
        D[j] = s
        for i in range(j + 1, min(j + 4, K)):
            s = G[i - j][j] + lam * O[i - j][j]
            for k in range(max(0, i - 3), j):
                s -= L[i - k][k] * L[j - k][k] * D[k]
            L[i - j][j] = s / D[j]
    return L, D


def band_solve(G, O, rhs, lam):
    """Solve ``(G + lam * O) c = rhs``."""
    G = np.asarray(G, dtype=float).tolist()
    O = np.asarray(O, dtype=float).tolist()
    L, D = _ldl(G, O, float(lam))
    K = len(D)
    z = [float(v) for v in rhs]
    for i in range(K):
        for k in range(max(0, i - 3), i):
            z[i] -= L[i - k][k] * z[k]
    for i in range(K):
        z[i] /= D[i]
    for i in range(K - 1, -1, -1):
        for k in range(i + 1, min(i + 4, K)):
            z[i] -= L[k - i][i] * z[k]
    return np.array(z)


def band_trace(G, O, lam):
    """``trace((G + lam * O)^-1 G)`` from the band of the inverse."""
    G = np.asarray(G, dtype=float).tolist()
    O = np.asarray(O, dtype=float).tolist()
    L, D = _ldl(G, O, float(lam))
    K = len(D)
    S = [[0.0] * K for _ in range(4)]

    def sig(i, k):
        return S[i - k][k] if i >= k else S[k - i][i]

    for j in range(K - 1, -1, -1):
        hi = min(j + 4, K)
        for i in range(j + 1, hi):
            s = 0.0
            for k in range(j + 1, hi):
                s -= L[k - j][j] * sig(i, k)
            S[i - j][j] = s
        s = 1.0 / D[j]
        for k in range(j + 1, hi):
            s -= L[k - j][j] * S[k - j][j]
        S[0][j] = s
    acc = 0.0
    for j in range(K):
        acc += S[0][j] * G[0][j]
        for d in range(1, 4):
            if j + d < K:
                acc += 2.0 * S[d][j] * G[d][j]
    return acc
