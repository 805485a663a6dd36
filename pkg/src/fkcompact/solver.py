"""Compact time-marching solver for the backward fractional Feynman-Kac equation.

Each step solves one constant complex tridiagonal system

    H(l_0 P^n)_i - mu (P^n_{i+1} - 2 P^n_i + P^n_{i-1}) = rhs_i,   mu = K tau^alpha / h^2

whose right-hand side carries the full memory of earlier time levels.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .conv_quad import (
    WeightTable,
    check_alpha,
    check_order,
    damping_powers,
    fractional_power_weights,
)
from .mesh_ops import Grid1D, TimeGrid, compact_apply

logger = logging.getLogger(__name__)

SpaceFn = Callable[[np.ndarray], np.ndarray]
SpaceTimeFn = Callable[[np.ndarray, float], np.ndarray]
TimeFn = Callable[[float], complex]


class SingularSystemError(ZeroDivisionError):
    def __init__(self, index: int):
        super().__init__(f"zero pivot at row {index} of tridiagonal system")
        self.index = index


def potential_one(x):
    return np.ones_like(np.asarray(x, dtype=float))


def potential_x(x):
    return np.asarray(x, dtype=float).copy()


def _zero_space(x):
    return np.zeros(np.shape(x), dtype=complex)


def _zero_space_time(x, t):
    return np.zeros(np.shape(x), dtype=complex)


def _zero_time(t):
    return 0.0


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients and data of one initial-boundary value problem on (0, l).

    ``U``, ``phi`` take a node array; ``f`` takes ``(x, t)``; ``psi1``/``psi2``
    take ``t``.  All must accept numpy arrays where ``x`` appears.
    """

    alpha: float
    K_alpha: float
    rho: complex
    U: SpaceFn = potential_one
    f: SpaceTimeFn = _zero_space_time
    phi: SpaceFn = _zero_space
    psi1: TimeFn = _zero_time
    psi2: TimeFn = _zero_time
    l: float = 1.0
    T: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha", check_alpha(self.alpha, allow_one=False))
        object.__setattr__(self, "rho", complex(self.rho))
        if not self.K_alpha > 0:
            raise ValueError(f"K_alpha must be positive, got {self.K_alpha!r}")
        if not self.rho.real > 0:
            raise ValueError(f"Re(rho) must be positive, got rho={self.rho}")
        if not (self.l > 0 and self.T > 0):
            raise ValueError("domain length and horizon must be positive")
        for where, value in (("x=0", self.phi(np.array([0.0]))[0] - self.psi1(0.0)),
                             ("x=l", self.phi(np.array([self.l]))[0] - self.psi2(0.0))):
            if abs(value) > 1e-12:
                warnings.warn(f"initial and boundary data disagree at {where} by {abs(value):.3g}",
                              RuntimeWarning, stacklevel=3)

    def potential(self, x) -> np.ndarray:
        U = np.asarray(self.U(np.asarray(x, dtype=float)), dtype=float)
        U = np.broadcast_to(U, np.shape(x)).copy()
        if np.any(U < 0):
            raise ValueError("potential U(x) must be non-negative on the grid")
        return U


@dataclass
class TridiagonalSystem:
    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.diag)
        self.diag = np.asarray(self.diag, dtype=complex)
        self.sub = np.broadcast_to(np.asarray(self.sub, dtype=complex), (n,)).copy()
        self.sup = np.broadcast_to(np.asarray(self.sup, dtype=complex), (n,)).copy()
        if self.rhs is not None:
            self.rhs = np.asarray(self.rhs, dtype=complex)

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        y = self.diag * x
        y[1:] += self.sub[1:] * x[:-1]
        y[:-1] += self.sup[:-1] * x[1:]
        return y

    def dense(self) -> np.ndarray:
        n = len(self.diag)
        A = np.diag(self.diag)
        A[np.arange(1, n), np.arange(n - 1)] = self.sub[1:]
        A[np.arange(n - 1), np.arange(1, n)] = self.sup[:-1]
        return A


class TridiagonalFactor:
    """Thomas-algorithm LU factors of a tridiagonal matrix, reusable across right-hand sides.

    ``sub[0]`` and ``sup[-1]`` are ignored.  No pivoting is done.
    """

    def __init__(self, system: TridiagonalSystem):
        a, b, c = system.sub, system.diag, system.sup
        n = len(b)
        self.n = n
        self.sub = a.copy()
        self.cp = np.zeros(n, dtype=complex)
        self.denom = np.zeros(n, dtype=complex)
        prev_cp = 0.0
        for i in range(n):
            d = b[i] - (a[i] * prev_cp if i > 0 else 0.0)
            if d == 0:
                raise SingularSystemError(i)
            self.denom[i] = d
            prev_cp = c[i] / d if i < n - 1 else 0.0
            self.cp[i] = prev_cp

    def solve(self, rhs) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=complex)
        if rhs.shape != (self.n,):
            raise ValueError(f"rhs has shape {rhs.shape}, expected ({self.n},)")
        n, a, cp, denom = self.n, self.sub, self.cp, self.denom
        y = np.empty(n, dtype=complex)
        y[0] = rhs[0] / denom[0]
        for i in range(1, n):
            y[i] = (rhs[i] - a[i] * y[i - 1]) / denom[i]
        for i in range(n - 2, -1, -1):
            y[i] -= cp[i] * y[i + 1]
        return y


def thomas_solve(system: TridiagonalSystem) -> np.ndarray:
    if system.rhs is None:
        raise ValueError("system has no right-hand side")
    return TridiagonalFactor(system).solve(system.rhs)


@dataclass
class SolverRun:
    """Configuration and time history ``history[n, i] = P_i^n`` of one march."""

    problem: ProblemSpec
    q: int
    grid: Grid1D
    tgrid: TimeGrid
    history: np.ndarray = field(default=None, repr=False)
    factorizations: int = 0
    steps_done: int = 0

    def __post_init__(self):
        self.q = check_order(self.q)
        if self.history is None:
            self.history = np.zeros((self.tgrid.N + 1, self.grid.M + 1), dtype=complex)
            self.history[0] = self.problem.phi(self.grid.x)
        self._weight_matrix = None
        self._damping = None
        self._scaled = None
        self._scaled_rows = 0
        self._reversed = None

    @classmethod
    def create(cls, problem: ProblemSpec, q: int, M: int, N: int) -> "SolverRun":
        return cls(problem, q, Grid1D(problem.l, M), TimeGrid(problem.T, N))

    @property
    def mu(self) -> float:
        return self.problem.K_alpha * self.tgrid.tau ** self.problem.alpha / self.grid.h**2

    @property
    def final(self) -> np.ndarray:
        return self.history[-1]

    def damping(self) -> np.ndarray:
        """``E[k, i] = exp(-rho U_i k tau)`` for k = 0..N, cached per run."""
        if self._damping is None:
            U = self.problem.potential(self.grid.x)
            self._damping = damping_powers(self.problem.rho * U * self.tgrid.tau, self.tgrid.N)
        return self._damping

    def weight_matrix(self, weights: WeightTable) -> np.ndarray:
        """``D[k, i] = exp(-rho U_i k tau) l_k`` for k = 0..N, cached per run."""
        if self._weight_matrix is None or self._weight_matrix[0] is not weights:
            D = self.damping() * weights.weights[: self.tgrid.N + 1, None]
            self._weight_matrix = (weights, D)
        return self._weight_matrix[1]


    def reversed_weights(self, weights: WeightTable) -> np.ndarray:
        """``r[j] = l_{N-j}`` for j = 0..N, cached per run."""
        if self._reversed is None or self._reversed[0] is not weights:
            self._reversed = (weights, np.ascontiguousarray(weights.weights[self.tgrid.N::-1]))
        return self._reversed[1]

    @property
    def rescaled_memory(self) -> bool:
        """Whether the memory sum may pull ``exp(-rho U n tau)`` out as a common factor.

        That requires ``exp(Re(rho U) T)`` to stay far from overflow.
        """
        U = self.problem.potential(self.grid.x)
        return float(np.max(self.problem.rho.real * U)) * self.tgrid.T <= MAX_RESCALE_EXPONENT

    def scaled_history(self, upto: int) -> np.ndarray:
        """Rows ``G[m] = P^m / exp(-rho U m tau)`` for m < ``upto``; rows are filled once."""
        if self._scaled is None:
            self._scaled = np.zeros_like(self.history)
        E = self.damping()
        for m in range(self._scaled_rows, upto):
            self._scaled[m] = self.history[m] / E[m]
        self._scaled_rows = max(self._scaled_rows, upto)
        return self._scaled


# exp(300) ~ 1e130: rescaled history rows stay comfortably finite
MAX_RESCALE_EXPONENT = 300.0


def memory_sum(run: SolverRun, weights: WeightTable, n: int) -> np.ndarray:
    """``sum_{k=1}^{n-1} d_{i,k} P_i^{n-k}`` at every node.

    Since ``d_{i,k} = E_i^k l_k`` the sum equals ``E_i^n sum_m l_{n-m} G_i^m`` with
    ``G^m = P^m / E^m``, a single real matrix-vector product.  The direct
    node-by-node form is used when the rescaling could overflow.
    """
    if n < 2:
        return np.zeros(run.grid.M + 1, dtype=complex)
    if run.rescaled_memory:
        G = run.scaled_history(n)
        N = run.tgrid.N
        # contiguous reversed weights keep the product on the BLAS path
        lrev = run.reversed_weights(weights)[N - n + 1:N]
        acc = (lrev @ G[1:n].view(float)).view(complex)
        return run.damping()[n] * acc
    D = run.weight_matrix(weights)
    return np.einsum("ki,ki->i", D[1:n], run.history[n - 1:0:-1])


def _check_weights(run: SolverRun, weights: WeightTable):
    if weights.q != run.q or weights.alpha != run.problem.alpha:
        raise ValueError(f"weights are for (q={weights.q}, alpha={weights.alpha}), "
                         f"run needs (q={run.q}, alpha={run.problem.alpha})")
    if len(weights) < run.tgrid.N + 1:
        raise ValueError(f"need {run.tgrid.N + 1} weights, got {len(weights)}")


def assemble_lhs(run: SolverRun, weights: WeightTable) -> TridiagonalSystem:
    """Constant interior matrix: off-diagonals ``l_0/12 - mu``, diagonal ``10 l_0/12 + 2 mu``."""
    _check_weights(run, weights)
    n = run.grid.M - 1
    if n < 1:
        raise ValueError("grid has no interior nodes")
    l0, mu = weights[0], run.mu
    off = np.full(n, l0 / 12.0 - mu, dtype=complex)
    diag = np.full(n, 10.0 * l0 / 12.0 + 2.0 * mu, dtype=complex)
    return TridiagonalSystem(sub=off, diag=diag, sup=off.copy())


def assemble_rhs(run: SolverRun, weights: WeightTable, n: int) -> np.ndarray:
    """Interior right-hand side at time level ``n`` (``1 <= n <= N``).

    Uses levels ``0..n-1`` of ``run.history``.  Boundary values at level n
    are taken from ``psi1``/``psi2`` and lifted into the first and last rows.
    """
    _check_weights(run, weights)
    if not 1 <= n <= run.tgrid.N:
        raise ValueError(f"time level {n} outside 1..{run.tgrid.N}")
    if run.steps_done < n - 1:
        raise ValueError(f"history only holds levels 0..{run.steps_done}, level {n} needs 0..{n - 1}")
    prob, grid, tau = run.problem, run.grid, run.tgrid.tau
    H = run.history
    tn = n * tau

    # sum_{k<n} d_k exp(-rho U (n-k) tau) P^0 = exp(-rho U n tau) (sum_{k<n} l_k) P^0
    initial = run.damping()[n] * weights.weights[:n].sum() * H[0]
    memory = memory_sum(run, weights, n)
    forcing = tau ** prob.alpha * np.asarray(prob.f(grid.x, tn), dtype=complex)
    rhs = compact_apply(initial - memory + forcing)[1:-1]

    off = weights[0] / 12.0 - run.mu
    rhs[0] -= off * prob.psi1(tn)
    rhs[-1] -= off * prob.psi2(tn)
    return rhs


def march(problem: ProblemSpec, q: int, M: int, N: int,
          weights: WeightTable | None = None) -> SolverRun:
    """Run the scheme from ``t = 0`` to ``T`` on ``M`` cells and ``N`` steps."""
    run = SolverRun.create(problem, q, M, N)
    if weights is None:
        weights = fractional_power_weights(run.q, problem.alpha, N)
    lhs = assemble_lhs(run, weights)
    factor = TridiagonalFactor(lhs)
    run.factorizations += 1
    tau = run.tgrid.tau
    for n in range(1, N + 1):
        rhs = assemble_rhs(run, weights, n)
        run.history[n, 1:-1] = factor.solve(rhs)
        run.history[n, 0] = problem.psi1(n * tau)
        run.history[n, -1] = problem.psi2(n * tau)
        run.steps_done = n
    logger.debug("march q=%d M=%d N=%d done", run.q, M, N)
    return run
