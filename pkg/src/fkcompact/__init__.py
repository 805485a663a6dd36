"""Fourth-order compact solver with convolution-quadrature time stepping, applied to the 1-D backward fractional Feynman-Kac equation."""

from .conv_quad import (
    WeightTable,
    bdf_generating_poly,
    fractional_power_weights,
    substantial_derivative_oracle,
    substantial_weight,
    verify_weight_properties,
)
from .mesh_ops import Grid1D, TimeGrid, compact_apply, inner_product, norms
from .problems import example1, example2, max_error
from .solver import ProblemSpec, SolverRun, march, thomas_solve

__version__ = "0.1.0"

__all__ = [
    "Grid1D",
    "ProblemSpec",
    "SolverRun",
    "TimeGrid",
    "WeightTable",
    "bdf_generating_poly",
    "compact_apply",
    "example1",
    "example2",
    "fractional_power_weights",
    "inner_product",
    "march",
    "max_error",
    "norms",
    "substantial_derivative_oracle",
    "substantial_weight",
    "thomas_solve",
    "verify_weight_properties",
]
