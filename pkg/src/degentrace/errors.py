"""Exception hierarchy shared by all modules."""


class DegenTraceError(Exception):
    """Base class for every error raised by the package."""


class StructureError(DegenTraceError, ValueError):
    """Malformed polynomial or model data (inconsistent degrees, bad shapes)."""


class DefinitenessError(DegenTraceError, ValueError):
    """A homogeneous form takes a non-positive value on the unit sphere."""


class ConfigurationError(DegenTraceError, ValueError):
    """Invalid numerical configuration, e.g. a box too small for the window."""


class AccuracyError(DegenTraceError, ArithmeticError):
    """A quadrature or extrapolation failed its self-consistency check."""


class DecayError(DegenTraceError, ArithmeticError):
    """A tail cutoff could not be located below the hard bound."""


class CacheRangeError(DegenTraceError, ValueError):
    """Requested energies exceed the validated range of a cached spectrum."""


class IncompletenessError(DegenTraceError, RuntimeError):
    """A channel sweep stopped before all contributing channels were included."""


class UnsupportedPathError(DegenTraceError, NotImplementedError):
    """The requested computation path is not available for this input."""


class PreconditionError(DegenTraceError, ValueError):
    """An operation was called outside its domain of validity."""


class ConditioningError(DegenTraceError, ArithmeticError):
    """A least-squares design matrix is too ill-conditioned to trust."""

    def __init__(self, message: str, condition_number: float):
        super().__init__(message)
        self.condition_number = condition_number


class RefinementError(DegenTraceError, ArithmeticError):
    """Quadrature refinement did not reach the requested tolerance."""


class StiffnessError(DegenTraceError, RuntimeError):
    """The ODE integrator's step size collapsed."""


class ScaleError(DegenTraceError, ArithmeticError):
    """A finite-difference step is polluted by nonlinearity or noise."""


class NonCompactOrbitError(DegenTraceError, RuntimeError):
    """An orbit did not return within the time cap."""


class StructureViolationError(DegenTraceError, AssertionError):
    """A structural identity that must hold numerically was violated."""
