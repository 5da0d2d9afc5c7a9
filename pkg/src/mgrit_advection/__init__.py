"""Parallel-in-time multigrid for periodic linear advection.

Modules
-------
circulant
    Circulant and rational circulant operators applied through the FFT.
discretization
    Upwind finite differences with explicit and implicit Runge-Kutta steppers.
mgrit
    Two-level and multilevel MGRIT with FCF-relaxation.
theory
    Per-mode two-level convergence bounds.
optimizer
    Least squares construction of sparse coarse time-steppers.
expkit
    Experiment runners, CSV/SVG output and the command line interface.
"""
from .circulant import CirculantOperator, RationalStepper
from .discretization import SchemeSpec, build_phi
from .mgrit import Hierarchy, solve
from .optimizer import SparsityPattern, linear_lsq_psi, nonlinear_lsq_psi
from .theory import error_bound

__version__ = "0.1.0"

__all__ = [
    "CirculantOperator",
    "RationalStepper",
    "SchemeSpec",
    "build_phi",
    "Hierarchy",
    "solve",
    "SparsityPattern",
    "linear_lsq_psi",
    "nonlinear_lsq_psi",
    "error_bound",
    "__version__",
]
