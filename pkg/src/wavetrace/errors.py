"""Exception hierarchy shared by all modules."""


class WavetraceError(Exception):
    """Base class for every error raised by the package."""


class DomainError(WavetraceError, ArithmeticError):
    """Symbol evaluation left its domain (sqrt of a negative real, division by zero)."""


class UnsupportedDerivative(WavetraceError):
    """A derivative of an order the profile does not store was requested."""


class DegenerateError(WavetraceError):
    """The eigenvalue gap <xi>_b fell below the configured tolerance."""


class NotHermitian(WavetraceError):
    pass


class ProfileAssumptionError(WavetraceError):
    """The profile does not admit the (eta, beta) pair needed for a bound."""


class Xi1SignViolation(WavetraceError):
    """A sampled point has xi1 <= 0 where xi1 >= d0 > 0 is required."""


class StepFailure(WavetraceError):
    """The adaptive integrator's step size underflowed."""


class DegenerateEvent(WavetraceError):
    """A ray hit the <xi>_b floor; the partial trajectory is attached."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ProfileBoxMismatch(WavetraceError):
    """The profile is not compatible with the periodic quantization box."""


class MarginError(WavetraceError):
    pass


class ScenarioError(WavetraceError):
    """Invalid scenario file; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
