"""Exception types shared across the package.

The CLI maps each family onto a distinct exit status.
"""


class SpinPassageError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SpinPassageError, ValueError):
    """Inputs are inconsistent or outside the allowed domain."""


class ConvergenceError(SpinPassageError, RuntimeError):
    """A numerical procedure failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NormDriftError(ConvergenceError):
    """State norm drifted beyond the allowed bound during propagation."""


class CapabilityError(SpinPassageError):
    """Request exceeds the sizes this package handles with exact methods."""


class FirstOrderBreakdownWarning(RuntimeWarning):
    """First-order excitation estimate exceeded one."""
