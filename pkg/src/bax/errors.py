"""Exception types shared across the package."""

from __future__ import annotations


class NumericalError(RuntimeError):
    """Raised when a linear-algebra step fails beyond repair.

    Carries whatever diagnostics were cheap to collect at the failure
    site (matrix size, jitter level tried) in ``details``.
    """

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class NoPathError(RuntimeError):
    """Destination unreachable from the source vertex."""


class NegativeEdgeCostError(ValueError):
    """An edge-cost query returned a negative value."""


class ConfigError(ValueError):
    """Invalid or infeasible configuration value."""


class RunAborted(RuntimeError):
    """A sequential run failed mid-way; ``record`` holds the partial record."""

    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record
