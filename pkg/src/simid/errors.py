"""Exception types shared across the package."""


class SimidError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SimidError):
    """Operands have incompatible alphabet sizes."""


class InvalidDistribution(SimidError):
    """A probability vector is negative or does not sum to one."""


class BadTolerance(SimidError):
    """Solver tolerance outside the supported range (0, 1e-2]."""


class AbsoluteContinuityViolation(SimidError):
    """KL divergence requested where p puts mass outside supp(q)."""


class TooFewPoints(SimidError):
    """Curve operation needs at least two points."""


class TooLarge(SimidError):
    """Requested exhaustive computation exceeds the configured budget."""


class TriangleViolation(SimidError):
    """Distortion matrix fails the triangle inequality required by the
    triangle-decision schemes."""


class BudgetExceeded(SimidError):
    """Enumeration (patterns, vertices, sequences) exceeds its budget."""


class CliError(SimidError):
    """Command-line parse or validation failure (exit code 2)."""
