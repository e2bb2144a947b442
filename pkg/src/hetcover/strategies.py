"""The four weighting strategies compared in the experiments."""

from dataclasses import dataclass

import numpy as np

from .domain import SolverParams, Strategy
from .solver import init_weights, solve_weights

__all__ = ["StrategyKind", "choose_single_capabilities", "compute_weights"]


@dataclass(frozen=True)
class StrategyKind:
    """A strategy plus, for single-capability, each robot's fixed event pick.

    ``chosen_event`` is indexed by robot id, not by alive-row position.
    """

    kind: Strategy
    chosen_event: tuple = None

    @classmethod
    def of(cls, kind, chosen_event=None):
        kind = Strategy.parse(kind)
        if kind is Strategy.SINGLE_CAPABILITY and chosen_event is None:
            raise ValueError("single_capability needs a chosen event per robot")
        return cls(kind, None if chosen_event is None else tuple(int(c) for c in chosen_event))


def choose_single_capabilities(capabilities, rng):
    """Pick one available event type per robot, uniformly at random."""
    C = np.asarray(capabilities)
    picks = []
    for row in C:
        options = np.flatnonzero(row)
        if options.size == 0:
            raise ValueError("robot without capabilities cannot pick one")
        picks.append(int(rng.choice(options)))
    return tuple(picks)


def compute_weights(kind, S, W_prev, capabilities, params=SolverParams(), gamma1=1.0, gamma2=0.5, robot_ids=None):
    """Weight matrix for the alive robots under strategy ``kind``.

    Returns ``(weights, solve_result)``; the second item is ``None`` for the
    non-adaptive strategies.
    """
    if not isinstance(kind, StrategyKind):
        kind = StrategyKind.of(kind)
    C = np.asarray(capabilities, dtype=float)

    if kind.kind is Strategy.FULL:
        res = solve_weights(S, W_prev, C, params, gamma1, gamma2)
        return res.weights, res
    if kind.kind is Strategy.BASELINE:
        res = solve_weights(S, W_prev, C, params, 0.0, 0.0)
        return res.weights, res
    if kind.kind is Strategy.EQUALLY_WEIGHTED:
        return init_weights(C), None

    ids = range(C.shape[0]) if robot_ids is None else robot_ids
    W = np.zeros_like(C)
    for row, rid in enumerate(ids):
        j = kind.chosen_event[rid]
        if not C[row, j]:
            raise ValueError(f"robot {rid} cannot sense its chosen event {j}")
        W[row, j] = 1.0
    return W, None
