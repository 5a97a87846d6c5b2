"""Exception hierarchy shared by every pjlab module."""


class PjlabError(Exception):
    """Base class for all library errors."""


class UsageError(PjlabError, ValueError):
    """An argument is outside the range an operation supports."""


class ConfigurationError(PjlabError, ValueError):
    """Inconsistent or invalid configuration (grids, energy constants, run parameters)."""


class ParityError(PjlabError, ValueError):
    """Samples handed to an odd/even analysis do not have the required symmetry."""


class NotInHError(PjlabError, ValueError):
    """A field violates the zero-slope-at-origin constraint of the weighted space."""

    def __init__(self, slope_sum):
        self.slope_sum = float(slope_sum)
        super().__init__(
            f"field is not in H: sum m*a_m = {self.slope_sum:.3e} (must vanish)")


class UnsupportedParameterError(PjlabError, ValueError):
    """A model parameter lies outside the range where the method is valid."""


class DomainError(PjlabError, ValueError):
    """Evaluation requested outside the domain of definition (e.g. past blow-up)."""


class DegenerateNormalizationError(PjlabError, ArithmeticError):
    """The normalization divisor omega_x(0) is too close to zero."""


class NumericError(PjlabError, ArithmeticError):
    """Non-finite values or failed linear algebra.

    ``state`` carries the last good state when one is available.
    """

    def __init__(self, message, state=None, iterations=None):
        super().__init__(message)
        self.state = state
        self.iterations = iterations


class NonConvergenceError(PjlabError, ArithmeticError):
    """Newton iteration failed; ``last_iterate`` holds the final coefficients."""

    def __init__(self, message, last_iterate=None, history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.history = history or []


class GaugeDegeneracyError(NonConvergenceError):
    """The gauge-augmented Jacobian is numerically singular."""
