"""Gaussian-mixture event density fields and per-robot estimates of them."""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EventField",
    "EventSource",
    "OracleEstimator",
    "estimate",
    "estimate_gradient",
    "field_gradient",
    "field_value",
    "generate_events",
]


@dataclass(frozen=True)
class EventSource:
    event_type: int
    center: tuple
    amplitude: float = 10.0
    sigma: float = 10.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be > 0, got {self.amplitude}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def as_record(self):
        return {
            "event_type": int(self.event_type),
            "center_x": self.center[0],
            "center_y": self.center[1],
            "amplitude": float(self.amplitude),
            "sigma": float(self.sigma),
        }


@dataclass(frozen=True)
class EventField:
    """Density of one event type, a sum of isotropic Gaussian bumps."""

    event_type: int
    sources: tuple = ()
    _centers: np.ndarray = field(init=False, repr=False, compare=False)
    _amps: np.ndarray = field(init=False, repr=False, compare=False)
    _inv_var: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sources = tuple(self.sources)
        for s in sources:
            if s.event_type != self.event_type:
                raise ValueError(
                    f"source of type {s.event_type} placed in field of type {self.event_type}"
                )
        object.__setattr__(self, "sources", sources)
        object.__setattr__(self, "_centers", np.array([s.center for s in sources], dtype=float).reshape(-1, 2))
        object.__setattr__(self, "_amps", np.array([s.amplitude for s in sources], dtype=float))
        object.__setattr__(self, "_inv_var", np.array([1.0 / s.sigma**2 for s in sources], dtype=float))

    def _bumps(self, point):
        # d: (..., K, 2), g: (..., K)
        p = np.asarray(point, dtype=float)
        d = p[..., None, :] - self._centers
        g = self._amps * np.exp(-0.5 * np.sum(d * d, axis=-1) * self._inv_var)
        return d, g

    def value(self, point):
        _, g = self._bumps(point)
        return g.sum(axis=-1)

    def gradient(self, point):
        d, g = self._bumps(point)
        return -np.sum((g * self._inv_var)[..., None] * d, axis=-2)


def field_value(field, point):
    """Mixture density at ``point``; accepts a single 2-vector or an (..., 2) array."""
    v = field.value(point)
    return float(v) if np.ndim(v) == 0 else v


def field_gradient(field, point):
    """Analytic spatial gradient of the density, pointing uphill."""
    return field.gradient(point)


def generate_events(config, rng):
    """Place ``sources_per_event`` sources of each event type uniformly in the square."""
    L = config.environment_size
    fields = []
    for e in range(config.num_event_types):
        centers = rng.uniform(0.0, L, size=(config.sources_per_event, 2))
        sources = tuple(
            EventSource(e, tuple(c), amplitude=config.amplitude, sigma=config.sigma) for c in centers
        )
        fields.append(EventField(e, sources))
    return fields


class OracleEstimator:
    """A capable robot's estimate equals the true field; incapable robots see nothing.

    Swap in another object with the same two methods to model learned or
    sampled estimates.
    """

    def value(self, robot, field, point):
        if not robot.can_sense(field.event_type):
            return 0.0
        return field_value(field, point)

    def gradient(self, robot, field, point):
        if not robot.can_sense(field.event_type):
            return np.zeros(2)
        return field_gradient(field, point)


_ORACLE = OracleEstimator()


def estimate(robot, field, point, estimator=_ORACLE):
    return estimator.value(robot, field, point)


def estimate_gradient(robot, field, point, estimator=_ORACLE):
    return estimator.gradient(robot, field, point)
