"""Steady-state photon statistics of a one-atom laser via the deviation recurrence."""

from .deviation import ConvergenceError, DeviationTable, RecurrenceDomainError
from .params import InvalidParameterError, LaserRates, NormalizedParams, normalize
from .state import FockDistribution, SteadyStateSolution, build_solution, strong_coupling_solution

__all__ = [
    "ConvergenceError",
    "DeviationTable",
    "FockDistribution",
    "InvalidParameterError",
    "LaserRates",
    "NormalizedParams",
    "RecurrenceDomainError",
    "SteadyStateSolution",
    "build_solution",
    "normalize",
    "strong_coupling_solution",
]

__version__ = "0.1.0"
