"""Heterogeneous multi-robot sensor coverage with capability-balancing weights."""

from .domain import InvalidConfig, RobotState, SimConfig, SolverParams, StartArea, Strategy, validate_config
from .solver import CapabilityWeighting, event_norm, objective, oracle_solve, solve_weights
from .simulator import TrialResult, run_trial

__version__ = "0.1.0"

__all__ = [
    "CapabilityWeighting",
    "InvalidConfig",
    "RobotState",
    "SimConfig",
    "SolverParams",
    "StartArea",
    "Strategy",
    "TrialResult",
    "event_norm",
    "objective",
    "oracle_solve",
    "run_trial",
    "solve_weights",
    "validate_config",
]
