"""Exception hierarchy shared across the package.

Exit codes mirror the CLI contract: 1 usage, 2 provider failure, 3 data error.
"""

from __future__ import annotations


class LayoutGenError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class UsageError(LayoutGenError):
    """Bad invocation: unknown flags, missing arguments, conflicting options."""

    exit_code = 1


class ProviderError(LayoutGenError):
    """The completion or embedding provider failed after retries."""

    exit_code = 2


class DataError(LayoutGenError):
    """Invalid or unusable input data."""

    exit_code = 3


class InvalidInputError(DataError):
    """An argument violates an operation's preconditions."""


class EmptyCandidateError(DataError):
    """Model output contained no parseable layout elements.

    Carries the parse warnings gathered before giving up so callers can
    report why the candidate was unusable.
    """

    def __init__(self, message: str, warnings: tuple = ()) -> None:
        super().__init__(message)
        self.warnings = tuple(warnings)


class NoValidCandidateError(DataError):
    """Every candidate for a sample failed parsing; nothing to rank."""


class EmptySaliencyError(DataError):
    """No pixel exceeded the saliency threshold; caller should fall back."""


class EmptyIndexError(DataError):
    """Retrieval was asked to select exemplars from an index with none."""
