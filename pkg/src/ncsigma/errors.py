"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class NCSigmaError(Exception):
    """Base class for every error raised by the library."""


class ParameterError(NCSigmaError, ValueError):
    """Invalid or inconsistent numerical parameters."""


class DegenerateError(ParameterError):
    """Parameters sit on a singular locus (e.g. ``r - q*alpha == 0``)."""


class IntegrabilityError(NCSigmaError):
    """A Gaussian exponent has non-negative real part."""


class ConvergenceError(NCSigmaError):
    """An iteration failed to converge.

    ``residual`` holds the last residual, ``bounds`` the spectral
    diagnostics when available.
    """

    def __init__(self, message: str, residual: float | None = None,
                 bounds: tuple[float, float] | None = None) -> None:
        super().__init__(message)
        self.residual = residual
        self.bounds = bounds


class InvertibilityError(ConvergenceError):
    """Element is not (numerically) positive invertible."""


class TruncationError(NCSigmaError):
    """Accumulated discarded coefficient mass exceeds the budget."""


class WindowError(TruncationError):
    """Truncation window too small for the requested accuracy."""


class BasisError(NCSigmaError):
    """Test-section battery is numerically degenerate."""


class InputError(NCSigmaError, ValueError):
    """Input element violates a precondition (e.g. not a projection)."""


class ChargeError(NCSigmaError):
    """Raw topological charge is not close to an integer."""
