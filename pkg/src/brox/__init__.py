"""Ball-constrained proximal iterations over norm balls, with runtime certificates."""
from .broximal import BroxConfig, BroxSolution, brox, brox_bruteforce, brox_frank_wolfe
from .certify import (
    Certificate,
    CertificateReport,
    Counterexample,
    certify_trajectory,
    find_linf_distance_increase,
)
from .exceptions import (
    ArgumentError,
    BroxError,
    ConvergenceError,
    NumericError,
    SearchFailure,
    UnsupportedError,
)
from .geometry import (
    Ball,
    NormDescriptor,
    design_ellipsoid,
    dual_norm_value,
    lmo,
    norm_value,
    parse_norm,
)
from .methods import RadiusSchedule, Trajectory, linearized_step, run_bpm, run_linearized
from .problems import (
    Objective,
    make_least_squares,
    make_logistic,
    make_quadratic,
)

__version__ = "0.1.0"

__all__ = [
    "Ball",
    "NormDescriptor",
    "norm_value",
    "dual_norm_value",
    "lmo",
    "design_ellipsoid",
    "parse_norm",
    "Objective",
    "make_quadratic",
    "make_least_squares",
    "make_logistic",
    "BroxConfig",
    "BroxSolution",
    "brox",
    "brox_frank_wolfe",
    "brox_bruteforce",
    "RadiusSchedule",
    "Trajectory",
    "run_bpm",
    "run_linearized",
    "linearized_step",
    "Certificate",
    "CertificateReport",
    "Counterexample",
    "certify_trajectory",
    "find_linf_distance_increase",
    "BroxError",
    "ArgumentError",
    "NumericError",
    "UnsupportedError",
    "ConvergenceError",
    "SearchFailure",
]
