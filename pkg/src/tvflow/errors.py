"""Exception types raised across the package."""


class TVFlowError(Exception):
    """Base class for all package errors."""


class InvalidLevel(TVFlowError, ValueError):
    pass


class InvalidWidth(TVFlowError, ValueError):
    pass


class InvalidShape(TVFlowError, ValueError):
    pass


class InvalidGrid(TVFlowError, ValueError):
    pass


class InvalidStaggering(TVFlowError, ValueError):
    pass


class InvalidRange(TVFlowError, ValueError):
    pass


class InvalidInputs(TVFlowError, ValueError):
    pass


class TimeGridMismatch(TVFlowError, ValueError):
    pass


class GNAnomaly(TVFlowError, ArithmeticError):
    """Positive Gagliardo-Nirenberg left side with a vanishing total variation."""


class SolverFailure(TVFlowError, RuntimeError):
    """A time step could not be completed.

    ``step`` is the 1-based index of the failing step (``None`` when raised
    from a single-step routine) and ``result`` carries the last iterate.
    """

    def __init__(self, message, step=None, result=None):
        super().__init__(message)
        self.step = step
        self.result = result


class InnerNoConvergence(SolverFailure):
    pass


class LinearSolveStagnation(SolverFailure):
    pass


class ConfigError(TVFlowError, ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class UnknownKey(ConfigError):
    pass


class MissingKey(ConfigError):
    pass


class RangeViolation(ConfigError):
    pass


class FieldFormatError(TVFlowError, ValueError):
    pass


class DimensionMismatch(FieldFormatError):
    pass


class ParseError(FieldFormatError):
    pass
