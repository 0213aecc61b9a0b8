"""Exception hierarchy.

User-facing failures (bad input, exhausted budgets) derive from
``UsageError``; ``InvariantViolation`` is reserved for a proven inequality
failing on computed data, which always means a bug.
"""


class DiophError(Exception):
    """Base class for every error raised by this package."""


class UsageError(DiophError):
    """Bad input or an unsatisfiable request (CLI exit code 2)."""


class DescriptorError(UsageError, ValueError):
    """Malformed coordinate descriptor or grammar token."""

    def __init__(self, message: str, token: str | None = None):
        super().__init__(message if token is None else f"{message}: {token!r}")
        self.token = token


class PrecisionError(UsageError):
    """Required working precision exceeds the configured maximum."""

    def __init__(self, message: str, q=None):
        super().__init__(message)
        self.q = q


class BudgetError(UsageError):
    """Enumeration size exceeds the configured budget."""


class PreconditionError(UsageError):
    """An operation was called outside its documented domain."""


class InvariantViolation(DiophError):
    """A proven inequality failed on computed data (CLI exit code 3)."""
