"""Utility matrix construction and weighted movement blending."""

from dataclasses import dataclass

import numpy as np

from .fields import estimate, estimate_gradient

__all__ = ["UtilityMatrix", "blend_movement", "build_utility", "movement_direction"]

GRAD_EPSILON = 1e-9
MOTION_EPSILON = 1e-9


@dataclass(frozen=True)
class UtilityMatrix:
    """Per-robot, per-event utilities and the candidate steps that produced them.

    ``values`` has shape (N, E); ``directions`` has shape (N, E, 2).
    """

    values: np.ndarray
    directions: np.ndarray


def movement_direction(robot, field, step_size=1.0, grad_epsilon=GRAD_EPSILON, estimator=None):
    """Step of length ``step_size`` up the robot's estimate of ``field``.

    Zero when the robot is dead, cannot sense the event, or sits on a
    critical point of the estimate.
    """
    kw = {} if estimator is None else {"estimator": estimator}
    g = np.asarray(estimate_gradient(robot, field, robot.position, **kw), dtype=float)
    norm = np.hypot(g[0], g[1])
    if norm <= grad_epsilon:
        return np.zeros(2)
    return step_size * g / norm


def build_utility(robots, fields, step_size=1.0, grad_epsilon=GRAD_EPSILON, estimator=None):
    """Utility of a ``step_size`` move toward each event, per robot.

    With the default oracle estimator all robots are evaluated in one
    vectorized pass; a custom ``estimator`` is queried robot by robot.
    """
    if estimator is None:
        return _build_utility_oracle(robots, fields, step_size, grad_epsilon)
    kw = {"estimator": estimator}
    n, e = len(robots), len(fields)
    values = np.zeros((n, e))
    directions = np.zeros((n, e, 2))
    for i, robot in enumerate(robots):
        if not robot.alive:
            continue
        for j, fld in enumerate(fields):
            if not robot.can_sense(fld.event_type):
                continue
            step = movement_direction(robot, fld, step_size, grad_epsilon, estimator)
            directions[i, j] = step
            values[i, j] = estimate(robot, fld, robot.position + step, **kw)
    return UtilityMatrix(values, directions)


def blend_movement(weight_row, directions_row, motion_epsilon=MOTION_EPSILON):
    """Weighted sum of candidate steps, rescaled to unit length (zero stays zero)."""
    w = np.asarray(weight_row, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    raw = w @ np.asarray(directions_row, dtype=float).reshape(len(w), 2)
    norm = np.hypot(raw[0], raw[1])
    if norm <= motion_epsilon:
        return np.zeros(2)
    return raw / norm


def _build_utility_oracle(robots, fields, step_size, grad_epsilon):
    n, e = len(robots), len(fields)
    values = np.zeros((n, e))
    directions = np.zeros((n, e, 2))
    if n == 0:
        return UtilityMatrix(values, directions)
    pos = np.array([r.position for r in robots]).reshape(n, 2)
    sense = np.array(
        [[r.alive and bool(r.capabilities[f.event_type]) for f in fields] for r in robots], dtype=bool
    ).reshape(n, e)
    for j, fld in enumerate(fields):
        rows = np.flatnonzero(sense[:, j])
        if rows.size == 0:
            continue
        g = fld.gradient(pos[rows])
        norm = np.hypot(g[:, 0], g[:, 1])
        ok = norm > grad_epsilon
        step = np.zeros_like(g)
        step[ok] = step_size * g[ok] / norm[ok, None]
        directions[rows, j] = step
        values[rows, j] = fld.value(pos[rows] + step)
    return UtilityMatrix(values, directions)
