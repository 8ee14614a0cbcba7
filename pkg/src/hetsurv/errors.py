"""Exception types shared across the package."""

from __future__ import annotations

__all__ = ["HetsurvError", "DataError", "FitError", "DegenerateTargetError"]


class HetsurvError(Exception):
    """Base class for all package errors."""


class DataError(HetsurvError):
    """Malformed input data or configuration.

    Carries optional ``row`` (1-based data row) and ``column`` context so CLI
    messages can point at the offending cell.
    """

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class FitError(HetsurvError):
    """A nuisance learner failed to fit (non-convergence, separation, no events)."""


class DegenerateTargetError(HetsurvError):
    """The target parameter is not identified at the fitted solution.

    Raised e.g. when a ratio denominator estimate is non-positive. The CLI maps
    this to exit code 2.
    """
