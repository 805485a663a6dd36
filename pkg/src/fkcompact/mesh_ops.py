"""Uniform 1-D grids, difference operators and the discrete energy norms.

Grid functions are plain complex numpy arrays indexed over all nodes
``0..M`` (boundary nodes included).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class Grid1D:
    l: float
    M: int

    def __post_init__(self):
        if not self.l > 0:
            raise ValueError(f"domain length must be positive, got {self.l!r}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"need at least two cells, got M={self.M!r}")

    @property
    def h(self) -> float:
        return self.l / self.M

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.l, self.M + 1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.M + 1, dtype=complex)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"horizon must be positive, got {self.T!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"need at least one time step, got N={self.N!r}")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)


def _as_gridfn(u, grid: Grid1D) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (grid.M + 1,):
        raise ValueError(f"grid function has shape {u.shape}, expected ({grid.M + 1},)")
    return u


def in_vh(u, atol: float = 0.0) -> bool:
    """Whether ``u`` vanishes at both boundary nodes."""
    u = np.asarray(u)
    return abs(u[0]) <= atol and abs(u[-1]) <= atol


def delta_x(u, grid: Grid1D) -> np.ndarray:
    """Half-node differences; entry ``j-1`` holds ``(u_j - u_{j-1})/h``."""
    u = _as_gridfn(u, grid)
    return np.diff(u) / grid.h


def delta_x2(u, grid: Grid1D) -> np.ndarray:
    """Second differences at interior nodes ``1..M-1``."""
    u = _as_gridfn(u, grid)
    return (u[2:] - 2.0 * u[1:-1] + u[:-2]) / grid.h**2


def compact_apply(u, grid: Grid1D | None = None) -> np.ndarray:
    """Apply the (1, 10, 1)/12 averaging operator; boundary nodes pass through."""
    u = np.asarray(u, dtype=complex) if grid is None else _as_gridfn(u, grid)
    out = u.copy()
    out[1:-1] = (u[2:] + 10.0 * u[1:-1] + u[:-2]) / 12.0
    return out


def inner_product(u, v, grid: Grid1D) -> complex:
    """Discrete energy inner product; the second argument is conjugated."""
    u = _as_gridfn(u, grid)
    v = _as_gridfn(v, grid)
    for name, w in (("u", u), ("v", v)):
        if not in_vh(w):
            raise ValueError(f"{name} has non-zero boundary values")
    h = grid.h
    first = h * np.sum(delta_x(u, grid) * np.conj(delta_x(v, grid)))
    second = h * np.sum(delta_x2(u, grid) * np.conj(delta_x2(v, grid)))
    return complex(first - h**2 / 12.0 * second)


class Norms(NamedTuple):
    inf: float
    l2: float
    grad: float
    lap: float


def norms(u, grid: Grid1D) -> Norms:
    """Max, L2, gradient and Laplacian norms; ``inf`` and ``l2`` use interior nodes only."""
    u = _as_gridfn(u, grid)
    h = grid.h
    interior = np.abs(u[1:-1])
    return Norms(
        inf=float(interior.max()) if interior.size else 0.0,
        l2=math.sqrt(h * float(np.sum(interior**2))),
        grad=math.sqrt(h * float(np.sum(np.abs(delta_x(u, grid)) ** 2))),
        lap=math.sqrt(h * float(np.sum(np.abs(delta_x2(u, grid)) ** 2))),
    )


def max_norm_bound(grid: Grid1D) -> float:
    """Constant ``sqrt(l)/2`` bounding the max norm by the gradient norm on V_h."""
    return math.sqrt(grid.l) / 2.0
