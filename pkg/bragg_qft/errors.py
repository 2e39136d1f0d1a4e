"""
Exception hierarchy for the simulator.

The CLI maps these onto exit codes: ConfigError -> 2, everything numeric -> 3.
"""

from typing import Optional


class BraggQftError(Exception):
    """Base class for every error raised by bragg_qft."""


class ConfigError(BraggQftError):
    """Invalid or missing configuration value."""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        super().__init__(f"{key_path}: {message}")


class DomainError(BraggQftError, ValueError):
    """Argument outside the model's domain (frequency window, ε ≥ 1, z > L...)."""


class ContractViolation(BraggQftError, ValueError):
    """Precondition broken by the caller (non-unitary map, invalid quartet)."""


class NumericError(BraggQftError):
    """Root finding, fitting or estimation could not produce a result."""


class NoPhaseMatchError(NumericError):
    """No phase-matching root inside the search bracket."""


class FitError(NumericError):
    def __init__(self, message: str, residual_nm: Optional[float] = None):
        self.residual_nm = residual_nm
        if residual_nm is not None:
            message = f"{message} (final RMS residual {residual_nm:.4g} nm)"
        super().__init__(message)


class CalibrationError(NumericError):
    """A calibration target is not reachable with the given model."""


class InsufficientStatisticsError(NumericError):
    """An estimator denominator is zero."""


class HeraldingError(NumericError):
    """The herald never clicks, so the conditional state is undefined."""
