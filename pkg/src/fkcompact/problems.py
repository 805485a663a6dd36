"""Manufactured test problems with closed-form solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .conv_quad import check_alpha
from .solver import ProblemSpec, SolverRun, potential_one, potential_x

RHO = 1 + 1j
K_ALPHA = 0.5


@dataclass(frozen=True)
class ManufacturedProblem:
    name: str
    spec: ProblemSpec
    exact: Callable[[np.ndarray, float], np.ndarray]

    def exact_at(self, x, t) -> np.ndarray:
        return np.asarray(self.exact(np.asarray(x, dtype=float), t), dtype=complex)


def _sine(x):
    return np.sin(np.pi * np.asarray(x, dtype=float)).astype(complex)


def _zero(t):
    return 0.0


def example1(alpha: float, K_alpha: float = K_ALPHA, rho: complex = RHO,
             T: float = 1.0) -> ManufacturedProblem:
    """Constant potential; ``P = exp(-rho t) (t**(3+alpha) + 1) sin(pi x)``.

    The standard configuration is K_alpha = 0.5, rho = 1 + i on (0, 1) x (0, 1];
    the solution stays exact for other K_alpha, rho and horizons.
    """
    alpha = check_alpha(alpha, allow_one=False)
    rho, K = complex(rho), float(K_alpha)
    g = math.gamma(4 + alpha) / math.gamma(4)

    def exact(x, t):
        return np.exp(-rho * t) * (t ** (3 + alpha) + 1) * np.sin(np.pi * x)

    def f(x, t):
        s = np.sin(np.pi * np.asarray(x, dtype=float))
        return (g * np.exp(-rho * t) * t**3 * s
                + K * np.pi**2 * (t ** (3 + alpha) + 1) * np.exp(-rho * t) * s)

    spec = ProblemSpec(alpha=alpha, K_alpha=K, rho=rho, U=potential_one, f=f,
                       phi=_sine, psi1=_zero, psi2=_zero, l=1.0, T=T)
    return ManufacturedProblem("example1", spec, exact)


def example2(alpha: float, K_alpha: float = K_ALPHA, rho: complex = RHO,
             T: float = 1.0) -> ManufacturedProblem:
    """Potential ``U = x``; ``P = exp(-rho x t) (t**(3+alpha) + 1) sin(pi x)``."""
    alpha = check_alpha(alpha, allow_one=False)
    rho, K = complex(rho), float(K_alpha)
    g = math.gamma(4 + alpha) / math.gamma(4)

    def exact(x, t):
        return np.exp(-rho * x * t) * (t ** (3 + alpha) + 1) * np.sin(np.pi * x)

    def f(x, t):
        x = np.asarray(x, dtype=float)
        s, c = np.sin(np.pi * x), np.cos(np.pi * x)
        damp = np.exp(-rho * x * t)
        return (g * damp * t**3 * s
                - K * damp * (t ** (3 + alpha) + 1)
                * (rho**2 * t**2 * s - 2 * np.pi * rho * t * c - np.pi**2 * s))

    spec = ProblemSpec(alpha=alpha, K_alpha=K, rho=rho, U=potential_x, f=f,
                       phi=_sine, psi1=_zero, psi2=_zero, l=1.0, T=T)
    return ManufacturedProblem("example2", spec, exact)


EXAMPLES = {"example1": example1, "example2": example2}


def get_example(name, alpha: float) -> ManufacturedProblem:
    key = str(name)
    if key in ("1", "2"):
        key = f"example{key}"
    try:
        return EXAMPLES[key](alpha)
    except KeyError:
        raise ValueError(f"unknown example {name!r}; choose from {sorted(EXAMPLES)}") from None


def max_error(run: SolverRun, problem: ManufacturedProblem, level: int | None = None) -> float:
    """Largest interior modulus of the error at the final level (or at ``level``)."""
    n = run.steps_done if level is None else level
    t = n * run.tgrid.tau
    x = run.grid.x
    err = run.history[n, 1:-1] - problem.exact_at(x[1:-1], t)
    return float(np.max(np.abs(err))) if err.size else 0.0
