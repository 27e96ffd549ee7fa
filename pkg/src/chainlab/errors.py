"""Exception hierarchy for chainlab."""


class ChainError(Exception):
    """Base class for all chainlab errors."""


class InvalidMatrixError(ChainError, ValueError):
    """Matrix is not square, has entries outside [0, 1], or rows not summing to 1."""


class IrreducibilityError(ChainError):
    """The chain has more than one communicating class."""


class DegenerateStateError(ChainError):
    """A state carries zero stationary mass."""


class NumericalError(ChainError):
    """A linear solve was singular or its residual exceeded tolerance."""


class TruncationError(ChainError):
    """A truncated time law carries more tail mass than the error budget allows."""


class HoldingProbabilityError(ChainError, ValueError):
    """Holding probabilities violate a precondition."""


class ConvergenceError(ChainError):
    """An iterative construction did not reach its target within the horizon."""


class ScaleError(ChainError):
    """State space too large for exact subset enumeration."""


class SpecError(ChainError, ValueError):
    """A chain-spec document could not be parsed."""
