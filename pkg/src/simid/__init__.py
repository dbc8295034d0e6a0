"""Minimal compression rates for similarity identification.

Computes the identification rate R_ID(D) and the triangle-inequality
scheme rates for queries "is Y within distance D of X", plus a small
blocklength Monte Carlo simulator of those schemes.
"""

from .backend import BACKEND
from .core import (
    Channel,
    DistortionMatrix,
    Pmf,
    RateCurve,
    entropy,
    kl_divergence,
    lower_convex_envelope,
    mutual_information,
)
from .errors import (
    AbsoluteContinuityViolation,
    BadTolerance,
    BudgetExceeded,
    CliError,
    DimensionMismatch,
    InvalidDistribution,
    SimidError,
    TooFewPoints,
    TooLarge,
    TriangleViolation,
)
from .rates import (
    IdRateResult,
    SignPattern,
    closed_form_binary_symmetric,
    d_id_lc,
    d_id_tc,
    enumerate_sign_patterns,
    hamming_lower_bound,
    linear_score_of_pattern,
    r_id_curve,
    r_id_general,
    r_id_hamming,
    r_id_lc,
    r_id_tc,
)
from .simulator import (
    Codebook,
    SimulationResult,
    assign_signature,
    build_codebook,
    decide_triangle,
    estimate_maybe_probability,
    exhaustive_admissibility_check,
)
from .solver import (
    LinearScore,
    SolverReport,
    Status,
    distortion_rate,
    grid_oracle,
    max_score_at_rate,
    min_mi_linear_constraint,
    rate_distortion,
)
from .transport import DualVertex, dual_vertices, rho_bar, rho_bar_hamming

__version__ = "0.1.0"

__all__ = [
    "AbsoluteContinuityViolation",
    "BACKEND",
    "BadTolerance",
    "BudgetExceeded",
    "Channel",
    "CliError",
    "Codebook",
    "DimensionMismatch",
    "DistortionMatrix",
    "DualVertex",
    "IdRateResult",
    "InvalidDistribution",
    "LinearScore",
    "Pmf",
    "RateCurve",
    "SignPattern",
    "SimidError",
    "SimulationResult",
    "SolverReport",
    "Status",
    "TooFewPoints",
    "TooLarge",
    "TriangleViolation",
    "assign_signature",
    "build_codebook",
    "closed_form_binary_symmetric",
    "d_id_lc",
    "d_id_tc",
    "decide_triangle",
    "distortion_rate",
    "dual_vertices",
    "entropy",
    "enumerate_sign_patterns",
    "estimate_maybe_probability",
    "exhaustive_admissibility_check",
    "grid_oracle",
    "hamming_lower_bound",
    "kl_divergence",
    "linear_score_of_pattern",
    "lower_convex_envelope",
    "max_score_at_rate",
    "min_mi_linear_constraint",
    "mutual_information",
    "r_id_curve",
    "r_id_general",
    "r_id_hamming",
    "r_id_lc",
    "r_id_tc",
    "rate_distortion",
    "rho_bar",
    "rho_bar_hamming",
    "__version__",
]
