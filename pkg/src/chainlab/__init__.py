"""Exact mixing, hitting and stopping-time parameters of finite Markov chains."""

from .chain_core import (
    MarkovChain,
    TimePmf,
    is_reversible,
    lazy,
    reversed_chain,
    stationary_distribution,
    total_variation,
)
from .errors import (
    ChainError,
    ConvergenceError,
    DegenerateStateError,
    HoldingProbabilityError,
    InvalidMatrixError,
    IrreducibilityError,
    NumericalError,
    ScaleError,
    SpecError,
    TruncationError,
)

__version__ = "0.1.0"

__all__ = [
    "MarkovChain",
    "TimePmf",
    "is_reversible",
    "lazy",
    "reversed_chain",
    "stationary_distribution",
    "total_variation",
    "ChainError",
    "ConvergenceError",
    "DegenerateStateError",
    "HoldingProbabilityError",
    "InvalidMatrixError",
    "IrreducibilityError",
    "NumericalError",
    "ScaleError",
    "SpecError",
    "TruncationError",
]
