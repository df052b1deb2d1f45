"""Exception types raised across the library.

The CLI maps ``LabValidationError`` to exit code 2 and
``SolverConvergenceError`` to exit code 3.
"""
from typing import Any, Optional


class LabError(Exception):
    """Base class for every error raised by hklab."""


class LabValidationError(LabError, ValueError):
    """An input violates a documented invariant.

    ``field`` names the offending configuration field or invariant when known.
    """

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class SolverConvergenceError(LabError, RuntimeError):
    """The LET solver stopped without a certified duality gap."""

    def __init__(self, message: str, solution: Any = None):
        self.solution = solution
        super().__init__(message)
