"""Independent reference computations used only by the tests.

Nothing here calls the code paths it is used to check.
"""

from fractions import Fraction
from functools import lru_cache
from math import comb

import mpmath
import numpy as np

ORACLE_DPS = 40


def bdf_poly_exact(q):
    """W_q(z) = sum_{j=1}^q (1 - z)^j / j by direct binomial expansion."""
    c = [Fraction(0)] * (q + 1)
    for j in range(1, q + 1):
        for m in range(j + 1):
            c[m] += Fraction((-1) ** m * comb(j, m), j)
    return c


@lru_cache(maxsize=None)
def series_weights(q, alpha, count):
    """First ``count`` coefficients of W_q(z)^alpha in extended precision.

    Writes W = w0 (1 + V) with V(0) = 0 and sums the binomial series
    w0^alpha sum_j C(alpha, j) V^j, powers of V by repeated convolution.
    Returned as a tuple of mpf.
    """
    with mpmath.workdps(ORACLE_DPS):
        a = mpmath.mpf(alpha) if not isinstance(alpha, str) else mpmath.mpf(alpha)
        w = [mpmath.mpf(c.numerator) / c.denominator for c in bdf_poly_exact(q)]
        V = [mpmath.mpf(0)] + [wj / w[0] for wj in w[1:]]
        V = V + [mpmath.mpf(0)] * max(0, count - len(V))
        V = V[:count]
        out = [mpmath.mpf(0)] * count
        power = [mpmath.mpf(1)] + [mpmath.mpf(0)] * (count - 1)
        binom = mpmath.mpf(1)
        for j in range(count):
            for k in range(count):
                out[k] += binom * power[k]
            # next power of V, truncated
            nxt = [mpmath.mpf(0)] * count
            for k in range(count):
                if power[k] == 0:
                    continue
                for m in range(1, min(len(V), count - k)):
                    if V[m] != 0:
                        nxt[k + m] += power[k] * V[m]
            power = nxt
            binom = binom * (a - j) / (j + 1)
        scale = w[0] ** a
        return tuple(scale * v for v in out)


def dense_tridiagonal(sub, diag, sup):
    n = len(diag)
    A = np.zeros((n, n), dtype=complex)
    for i in range(n):
        A[i, i] = diag[i]
        if i > 0:
            A[i, i - 1] = sub[i]
        if i < n - 1:
            A[i, i + 1] = sup[i]
    return A


def gaussian_elimination(A, b):
    """Dense solve with partial pivoting, written out longhand."""
    A = np.array(A, dtype=complex)
    b = np.array(b, dtype=complex)
    n = len(b)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(A[col:, col])))
        A[[col, piv]] = A[[piv, col]]
        b[[col, piv]] = b[[piv, col]]
        for r in range(col + 1, n):
            f = A[r, col] / A[col, col]
            A[r, col:] -= f * A[col, col:]
            b[r] -= f * b[col]
    x = np.zeros(n, dtype=complex)
    for r in range(n - 1, -1, -1):
        x[r] = (b[r] - A[r, r + 1:] @ x[r + 1:]) / A[r, r]
    return x


def _compact_matrix(M):
    """(M-1) x (M+1) rows of the (1, 10, 1)/12 stencil."""
    H = np.zeros((M - 1, M + 1))
    for r, i in enumerate(range(1, M)):
        H[r, i - 1], H[r, i], H[r, i + 1] = 1 / 12, 10 / 12, 1 / 12
    return H


def _second_difference_matrix(M, h):
    D = np.zeros((M - 1, M + 1))
    for r, i in enumerate(range(1, M)):
        D[r, i - 1], D[r, i], D[r, i + 1] = 1 / h**2, -2 / h**2, 1 / h**2
    return D


def march_full_scheme(spec, q, M, N):
    """Solve the full discrete scheme level by level as dense linear systems.

    Every level n assembles, without any rearrangement,

        H sum_{k=0}^n d_k P^{n-k} - H sum_{k=0}^n d_k exp(-rho U (n-k) tau) P^0
            = K tau^alpha delta_x^2 P^n + tau^alpha H f^n

    with the interior of P^n unknown.  Weights come from the extended
    precision series and exponentials are evaluated directly.
    """
    l, T = spec.l, spec.T
    h, tau = l / M, T / N
    x = np.array([i * h for i in range(M + 1)])
    U = np.asarray(spec.U(x), dtype=float) * np.ones(M + 1)
    lw = np.array([float(v) for v in series_weights(q, spec.alpha, N + 1)])
    d = np.array([[np.exp(-spec.rho * U[i] * k * tau) * lw[k] for i in range(M + 1)]
                  for k in range(N + 1)])
    Hm = _compact_matrix(M)
    D2 = _second_difference_matrix(M, h)
    K = spec.K_alpha
    P = np.zeros((N + 1, M + 1), dtype=complex)
    P[0] = spec.phi(x)
    for n in range(1, N + 1):
        tn = n * tau
        bnd = np.zeros(M + 1, dtype=complex)
        bnd[0], bnd[M] = spec.psi1(tn), spec.psi2(tn)
        known = np.zeros(M + 1, dtype=complex)
        for k in range(1, n + 1):
            known += d[k] * P[n - k]
        init = np.zeros(M + 1, dtype=complex)
        for k in range(0, n + 1):
            init += d[k] * np.exp(-spec.rho * U * (n - k) * tau) * P[0]
        f = np.asarray(spec.f(x, tn), dtype=complex)
        # A_full acts on the full node vector of P^n
        A_full = Hm * d[0][None, :] - K * tau**spec.alpha * D2
        rhs = -(Hm @ known) + Hm @ init + tau**spec.alpha * (Hm @ f) - A_full @ bnd
        P[n, 1:M] = np.linalg.solve(A_full[:, 1:M], rhs)
        P[n, 0], P[n, M] = bnd[0], bnd[M]
    return P
