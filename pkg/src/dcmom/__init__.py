"""Stochastic difference-of-convex solvers with momentum."""

from .core import DimensionError, InvalidConfig, NumericFailure, RngStream
from .metrics import DivergedError, IterateTrace, RunResult
from .momentum import Estimator, MomentumState
from .problems import DcProblem, L1QuadraticDc, QuadraticDc, make_problem
from .solver_double import DoubleLoopConfig, run_double_loop
from .solver_single import SingleLoopConfig, run_single_loop, run_smag_quadratic

__version__ = "0.1.0"

__all__ = [
    "DcProblem",
    "DimensionError",
    "DivergedError",
    "DoubleLoopConfig",
    "Estimator",
    "InvalidConfig",
    "IterateTrace",
    "L1QuadraticDc",
    "MomentumState",
    "NumericFailure",
    "QuadraticDc",
    "RngStream",
    "RunResult",
    "SingleLoopConfig",
    "make_problem",
    "run_double_loop",
    "run_single_loop",
    "run_smag_quadratic",
]
