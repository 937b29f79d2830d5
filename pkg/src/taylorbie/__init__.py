"""Boundary-integral Taylor states in axisymmetric tori and toroidal shells."""

__version__ = "0.1.0"

from .errors import AccuracyError, ConfigError, DomainError, GeometryError, ProximityError, ResonanceError, TaylorError
from .geometry import discretize_arclength, make_miller_curve
from .beltrami_solver import eigen_scan, eigenfield, null_vector, solve_genus1, solve_genus2, solve_taylor_state
from .field_eval import eval_B, eval_B_array, verify_field
from .estimator import ResonanceScanner, TaylorStateSolver

__all__ = [
    "__version__",
    "TaylorError",
    "ConfigError",
    "GeometryError",
    "DomainError",
    "ProximityError",
    "ResonanceError",
    "AccuracyError",
    "make_miller_curve",
    "discretize_arclength",
    "solve_genus1",
    "solve_genus2",
    "solve_taylor_state",
    "eigen_scan",
    "eigenfield",
    "null_vector",
    "eval_B",
    "eval_B_array",
    "verify_field",
    "TaylorStateSolver",
    "ResonanceScanner",
]
