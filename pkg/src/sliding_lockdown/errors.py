"""Exception types raised across the package."""

from __future__ import annotations


class SlidingLockdownError(Exception):
    """Base class for all package errors."""


class ShapeError(SlidingLockdownError, ValueError):
    """State vector does not match the compartments of the model kind."""


class DomainError(SlidingLockdownError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class StabilityError(SlidingLockdownError, ValueError):
    """Requested sliding-surface coefficients give an unstable surface."""


class NumericalError(SlidingLockdownError, RuntimeError):
    """Integration produced non-finite values or broke conservation."""


class ConfigError(SlidingLockdownError, ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ParseError(SlidingLockdownError, ValueError):
    """Malformed input data file; ``line`` is 1-based."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
