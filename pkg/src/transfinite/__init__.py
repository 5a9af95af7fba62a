"""Transfinite interpolation of periodic hyperplane data by Beppo Levi polysplines."""

from .kernel import KernelParams, eval_kernel, kernel_coefficients
from .polyspline import PolyConfig, analyze, duchon_seminorm, evaluate_grid, evaluate_model, fit
from .spline1d import KnotSet, collocation_solve, interpolate, natural_spline, natural_spline_zero, solve_lagrange

__all__ = [
    "KernelParams", "KnotSet", "PolyConfig", "analyze", "collocation_solve", "duchon_seminorm",
    "eval_kernel", "evaluate_grid", "evaluate_model", "fit", "interpolate", "kernel_coefficients",
    "natural_spline", "natural_spline_zero", "solve_lagrange",
]
