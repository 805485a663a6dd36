"""Convolution-quadrature weights for the fractional substantial derivative.

The time weights ``l_k`` are the power-series coefficients of ``W_q(z)**alpha``
where ``W_q(z) = sum_{j=1}^{q} (1 - z)**j / j`` is the generating polynomial of
the q-step backward differentiation formula.  The substantial weights attach
the memory factor ``exp(-rho * U_i * k * tau)`` to each ``l_k``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

import numpy as np

VALID_ORDERS = (1, 2, 3, 4)

# Running products of the exponential factor are re-seeded from a direct
# evaluation at this interval to bound accumulated rounding drift.
REFRESH_INTERVAL = 1024


def check_order(q: int) -> int:
    if isinstance(q, bool) or int(q) != q or int(q) not in VALID_ORDERS:
        raise ValueError(f"scheme order q must be one of {VALID_ORDERS}, got {q!r}")
    return int(q)


def check_alpha(alpha: float, allow_one: bool = True) -> float:
    alpha = float(alpha)
    upper_ok = alpha <= 1.0 if allow_one else alpha < 1.0
    if not (alpha > 0.0 and upper_ok):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    return alpha


def bdf_generating_poly_exact(q: int) -> list[Fraction]:
    """Exact rational coefficients of ``W_q(z)`` in increasing powers of z."""
    q = check_order(q)
    coeffs = [Fraction(0)] * (q + 1)
    for j in range(1, q + 1):
        # (1 - z)**j = sum_m C(j, m) (-1)**m z**m
        for m in range(j + 1):
            coeffs[m] += Fraction(math.comb(j, m) * (-1) ** m, j)
    return coeffs


def bdf_generating_poly(q: int) -> np.ndarray:
    """Coefficients ``w_0..w_q`` of the BDF-q generating polynomial.

    >>> bdf_generating_poly(2).tolist()
    [1.5, -2.0, 0.5]
    """
    return np.array([float(c) for c in bdf_generating_poly_exact(q)])


@dataclass(frozen=True)
class WeightTable:
    """First ``len(weights)`` coefficients of ``W_q(z)**alpha``."""

    q: int
    alpha: float
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.weights)

    def __getitem__(self, k):
        return self.weights[k]

    @property
    def sanity_only(self) -> bool:
        """True when alpha sits on the excluded endpoint alpha = 1."""
        return self.alpha == 1.0

    def partial_sums(self) -> np.ndarray:
        """``S[n] = sum_{k<n} l_k`` for n = 0..len(weights)."""
        return np.concatenate(([0.0], np.cumsum(self.weights)))


def fractional_power_weights(q: int, alpha: float, count: int) -> WeightTable:
    """Return ``l_0..l_count`` for ``W_q(z)**alpha``.

    Uses the recurrence obtained by matching coefficients in
    ``W * d/dz(W**alpha) = alpha * W' * W**alpha``::

        l_0 = w_0**alpha
        l_k = 1/(k w_0) * sum_{j=1}^{min(k,q)} ((alpha + 1) j - k) w_j l_{k-j}

    which costs O(q * count).
    """
    q = check_order(q)
    alpha = check_alpha(alpha)
    if int(count) != count or count < 0:
        raise ValueError(f"count must be a non-negative integer, got {count!r}")
    count = int(count)

    w = bdf_generating_poly(q)
    out = np.empty(count + 1)
    out[0] = w[0] ** alpha
    for k in range(1, count + 1):
        acc = 0.0
        for j in range(1, min(k, q) + 1):
            acc += ((alpha + 1.0) * j - k) * w[j] * out[k - j]
        out[k] = acc / (k * w[0])
    return WeightTable(q=q, alpha=alpha, weights=out)


@dataclass(frozen=True)
class SubstantialFactor:
    """Memory damping ``exp(-rho * U_i * tau)`` at a single grid node."""

    rho: complex
    U_i: float
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        if (complex(self.rho) * self.U_i).real < 0:
            warnings.warn(
                f"Re(rho*U_i) = {(complex(self.rho) * self.U_i).real:g} < 0: "
                "exponential factors grow with k",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def rate(self) -> complex:
        return complex(self.rho) * self.U_i * self.tau


def substantial_weight(factor: SubstantialFactor, table: WeightTable, k: int) -> complex:
    """``d_k = exp(-rho U_i k tau) * l_k``."""
    if not 0 <= k < len(table):
        raise IndexError(f"k={k} outside weight table of length {len(table)}")
    return complex(np.exp(-factor.rate * k) * table[k])


def damping_powers(rate, count: int, refresh: int = REFRESH_INTERVAL) -> np.ndarray:
    """Rows ``k = 0..count`` of ``exp(-rate * k)`` built as a running product.

    ``rate`` may be a scalar or an array (one entry per node); the result has
    shape ``(count + 1,) + shape(rate)``.
    """
    rate = np.asarray(rate, dtype=complex)
    out = np.empty((count + 1,) + rate.shape, dtype=complex)
    step = np.exp(-rate)
    out[0] = 1.0
    for k in range(1, count + 1):
        if k % refresh == 0:
            out[k] = np.exp(-rate * k)
        else:
            out[k] = out[k - 1] * step
    return out


def iter_substantial_weights(factor: SubstantialFactor, table: WeightTable) -> Iterator[complex]:
    """Yield ``d_0, d_1, ...`` using the running product of the damping factor."""
    powers = damping_powers(factor.rate, len(table) - 1)
    for k in range(len(table)):
        yield complex(powers[k] * table[k])


def substantial_weight_matrix(table: WeightTable, rho: complex, U: np.ndarray, tau: float,
                              count: int | None = None) -> np.ndarray:
    """``D[k, i] = exp(-rho U_i k tau) * l_k`` for every node i."""
    count = len(table) - 1 if count is None else count
    if count >= len(table):
        raise IndexError(f"need {count + 1} weights, table has {len(table)}")
    rate = complex(rho) * np.asarray(U, dtype=float) * tau
    return damping_powers(rate, count) * table.weights[: count + 1, None]


@dataclass
class WeightReport:
    alpha: float
    n_max: int
    first_is_one: bool
    tail_negative: bool
    partial_sum_bounds: bool
    first_failure: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.first_is_one and self.tail_negative and self.partial_sum_bounds


def verify_weight_properties(table: WeightTable, n_max: int) -> WeightReport:
    """Check the first-order weight properties up to ``n_max``.

    Checked: ``l_0 = 1``, ``l_k < 0`` for ``1 <= k <= n_max`` and
    ``1/(n**alpha Gamma(1-alpha)) < sum_{k<n} l_k <= 1/n**alpha``
    for ``1 <= n <= n_max``.
    """
    notes = []
    if table.q != 1:
        notes.append(f"properties are stated for q=1 only; table has q={table.q}")
    if table.sanity_only:
        notes.append("alpha = 1 is outside the admissible range (sanity check only)")
    alpha = table.alpha
    l = table.weights
    first_failure = {}

    first_is_one = bool(l[0] == 1.0)
    if not first_is_one:
        first_failure["first_is_one"] = 0

    kmax = min(n_max, len(l) - 1)
    if kmax < n_max:
        notes.append(f"table covers k <= {kmax} only")
    tail = l[1 : kmax + 1]
    bad = np.nonzero(~(tail < 0))[0]
    tail_negative = bad.size == 0
    if not tail_negative:
        first_failure["tail_negative"] = int(bad[0]) + 1

    nmax_sums = min(n_max, len(l))
    n = np.arange(1, nmax_sums + 1, dtype=float)
    sums = np.cumsum(l[:nmax_sums])
    upper = n ** -alpha
    if alpha < 1.0:
        lower = upper / math.gamma(1.0 - alpha)
    else:
        lower = np.zeros_like(upper)
    ok = (sums > lower) & (sums <= upper)
    bad = np.nonzero(~ok)[0]
    partial_sum_bounds = bad.size == 0
    if not partial_sum_bounds:
        first_failure["partial_sum_bounds"] = int(bad[0]) + 1

    return WeightReport(alpha, n_max, first_is_one, tail_negative, partial_sum_bounds,
                        first_failure, notes)


def substantial_derivative_oracle(alpha: float, rho: complex, U: float, sigma: float,
                                  t: float) -> complex:
    """Closed form of the substantial derivative of ``exp(-rho U t) t**sigma``.

    Equals ``exp(-rho U t) * Gamma(sigma+1)/Gamma(sigma+1-alpha) * t**(sigma-alpha)``.
    """
    if not sigma > alpha - 1:
        raise ValueError(f"need sigma > alpha - 1, got sigma={sigma}, alpha={alpha}")
    if not t > 0:
        raise ValueError(f"need t > 0, got {t}")
    coef = math.gamma(sigma + 1.0) / math.gamma(sigma + 1.0 - alpha)
    return complex(np.exp(-complex(rho) * U * t) * coef * t ** (sigma - alpha))


def discrete_substantial_derivative(table: WeightTable, rho: complex, U: float, tau: float,
                                    g_values: np.ndarray) -> complex:
    """``tau**-alpha * sum_{k=0}^{n} d_k g(t_{n-k})`` with ``g_values[m] = g(t_m)``."""
    n = len(g_values) - 1
    d = substantial_weight_matrix(table, rho, np.array([U]), tau, count=n)[:, 0]
    return complex(np.dot(d, np.asarray(g_values)[::-1]) / tau ** table.alpha)
