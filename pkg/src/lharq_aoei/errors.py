"""Exception and warning types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(ToolkitError, ValueError):
    """A numeric argument is outside its admissible range."""


class ConstraintViolationError(ToolkitError, ValueError):
    """A cross-parameter constraint (e.g. mixing rate vs. coding rate) is violated."""


class InvalidStateError(ToolkitError, ValueError):
    """A state object holds counts that cannot occur (negative sizes, U > S, ...)."""


class ProtocolStateError(ToolkitError, RuntimeError):
    """An operation was invoked in a protocol state where it is undefined."""


class NumericalFailureError(ToolkitError, ArithmeticError):
    """An iterative numeric routine failed to converge within its budget."""


class ConditionalUndefinedError(ToolkitError, ArithmeticError):
    """A conditional probability is requested but the conditioning event has
    (numerically) zero probability."""


class DivergentModelError(ToolkitError, ValueError):
    """The requested model has no finite answer (e.g. error probability 1)."""


class DegenerateTargetError(ToolkitError, ValueError):
    """An inversion target makes the closed form degenerate (zero denominator)."""


class InsufficientDataError(ToolkitError, ValueError):
    """Not enough trace data to compute the requested statistic."""


class ConfigError(ToolkitError, ValueError):
    """A run configuration file is malformed or violates an invariant."""


class OutOfModelWarning(UserWarning):
    """A modeling identity was evaluated outside the region where its output
    is physically meaningful (e.g. an error probability outside [0, 1])."""
