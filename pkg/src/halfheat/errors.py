"""Exception types shared across the package.

Structural errors (wrong shapes, unreadable input) are kept distinct from
mathematical invariant failures, which are reported through validation
reports rather than raised.
"""


class HalfheatError(Exception):
    """Base class for all package errors."""


class StructuralError(HalfheatError, ValueError):
    """Malformed input: inconsistent dimensions, unparsable config."""


class DomainError(HalfheatError, ValueError):
    """Argument outside the mathematical domain (e.g. y <= 0, t <= 0)."""


class ParameterError(HalfheatError, ValueError):
    """Operator or weight parameters outside the admissible range."""


class WrongOperatorError(HalfheatError, ValueError):
    """A closed-form route was requested for an operator it does not cover."""


class SolveFailure(HalfheatError, RuntimeError):
    """A linear solve did not reach the requested residual."""


class FitUnderdeterminedError(HalfheatError, ValueError):
    """Sample set too degenerate to fit envelope constants."""
