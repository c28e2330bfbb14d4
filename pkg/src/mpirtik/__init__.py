"""Mixed precision iterative refinement for Tikhonov regularized inverse problems.

Floating-point formats are simulated by rounding float64 values after every
operation, so any (exponent, mantissa) format narrower than binary64 can be
studied on ordinary hardware.
"""

__version__ = "0.1.0"

from .estimators import (
    CirculantIRRegressor,
    IterativeRefinementRegressor,
    LandweberRegressor,
    MixedPrecisionIRRegressor,
    PreconditionedLandweberRegressor,
    TikhonovRegressor,
)
from .fpsim import FP16, FP32, FP64, FloatFormat, PrecisionTriple, get_format, round_array, round_value
from .problems import InverseProblem, make_problem
from .solvers import RunRecord, SolverConfig

__all__ = [
    "__version__",
    "FloatFormat",
    "PrecisionTriple",
    "FP16",
    "FP32",
    "FP64",
    "get_format",
    "round_array",
    "round_value",
    "InverseProblem",
    "make_problem",
    "SolverConfig",
    "RunRecord",
    "TikhonovRegressor",
    "LandweberRegressor",
    "PreconditionedLandweberRegressor",
    "IterativeRefinementRegressor",
    "MixedPrecisionIRRegressor",
    "CirculantIRRegressor",
]
