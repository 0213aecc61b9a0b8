"""Experimental toolkit for simultaneous inhomogeneous Diophantine approximation on curves."""

__version__ = "0.1.0"

from dioph.core import (
    ApproxRecord,
    DecimalLiteral,
    PointSpec,
    QuadraticSurd,
    Rational,
    RealScalar,
    SeriesGenerator,
    Shift,
    evaluate_point,
    nearest_integer_distance,
    parse_point,
    parse_shift,
)
from dioph.errors import (
    BudgetError,
    DescriptorError,
    DiophError,
    InvariantViolation,
    PreconditionError,
    PrecisionError,
)

__all__ = [
    "ApproxRecord",
    "BudgetError",
    "DecimalLiteral",
    "DescriptorError",
    "DiophError",
    "InvariantViolation",
    "PointSpec",
    "PrecisionError",
    "PreconditionError",
    "QuadraticSurd",
    "Rational",
    "RealScalar",
    "SeriesGenerator",
    "Shift",
    "__version__",
    "evaluate_point",
    "nearest_integer_distance",
    "parse_point",
    "parse_shift",
]
