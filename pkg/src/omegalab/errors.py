"""Exception hierarchy shared by every omegalab module."""


class OmegaLabError(Exception):
    """Base class for all library errors."""


class ParameterError(OmegaLabError, ValueError):
    """A parameter set violates a model invariant."""


class PoleProximityError(OmegaLabError, ArithmeticError):
    """An evaluation point sits too close to a pole."""


class SingularityError(OmegaLabError, ArithmeticError):
    """A closed-form constant is evaluated at one of its poles."""


class ResonanceError(SingularityError):
    """A Mellin contour or eigenvalue denominator hits a resonance."""


class StripViolationError(OmegaLabError, ValueError):
    """A Fourier integral is evaluated outside its convergence strip."""


class ContinuationError(OmegaLabError, RuntimeError):
    """Newton continuation failed; ``last_parameter`` holds the last good point."""

    def __init__(self, message, last_parameter=None):
        super().__init__(message)
        self.last_parameter = last_parameter


class RootCollisionError(OmegaLabError, RuntimeError):
    """Two Bethe roots coincide within tolerance."""


class ConvergenceError(OmegaLabError, RuntimeError):
    """An iterative solver did not reach its tolerance."""


class SingularSystemError(OmegaLabError, ArithmeticError):
    """A dense linear system is singular to working precision."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class DomainError(OmegaLabError, ValueError):
    """Parameters fall outside the domain where a closed form is valid."""


class AxisZeroError(OmegaLabError, ArithmeticError):
    """1 + A vanishes (numerically) on the integration line."""


class FitError(OmegaLabError, RuntimeError):
    """A tail or extrapolation fit has an unacceptable residual."""
