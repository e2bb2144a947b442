"""Time-stepping coverage simulation with failure injection."""

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import RobotState, Strategy, config_to_dict, make_streams, validate_config
from .fields import generate_events
from .solver import NoConvergence, init_weights
from .strategies import StrategyKind, choose_single_capabilities, compute_weights
from .utility import blend_movement, build_utility

__all__ = [
    "FailureSchedule",
    "TrialResult",
    "WorldState",
    "build_failure_schedule",
    "init_world",
    "make_world",
    "random_capabilities",
    "random_start_positions",
    "run_trial",
    "sensing_quality",
    "step",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FailureSchedule:
    events: tuple = ()  # (step, robot_id) pairs sorted by step

    def at(self, t):
        return [rid for s, rid in self.events if s == t]

    def as_records(self):
        return [{"step": int(s), "robot_id": int(r)} for s, r in self.events]


@dataclass
class WorldState:
    """Snapshot of a trial.

    ``W_prev`` holds one row per alive robot, ordered like ``alive_ids``.
    ``weights`` is the full N x E matrix of the last step, zero for dead robots.
    """

    robots: list
    fields: list
    t: int
    W_prev: np.ndarray
    alive_ids: tuple
    schedule: FailureSchedule = FailureSchedule()
    environment_size: float = 100.0
    step_size: float = 1.0
    weights: np.ndarray = None
    solver_iterations: int = 0
    unconverged_solves: int = 0


@dataclass
class TrialResult:
    quality_trace: np.ndarray
    improvement: float
    peak_improvement: float
    failure_events: FailureSchedule
    config: dict
    seed: int
    strategy: str
    events: list = field(default_factory=list)
    solver_iterations: int = 0
    unconverged_solves: int = 0
    positions: np.ndarray = field(default=None, repr=False)
    alive: np.ndarray = field(default=None, repr=False)
    weights: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {
            "seed": int(self.seed),
            "strategy": self.strategy,
            "improvement": float(self.improvement),
            "peak_improvement": float(self.peak_improvement),
            "quality_trace": [float(q) for q in self.quality_trace],
            "failure_events": self.failure_events.as_records(),
            "events": self.events,
            "solver_iterations": int(self.solver_iterations),
            "unconverged_solves": int(self.unconverged_solves),
            "config": self.config,
        }


def sensing_quality(world):
    """Capability-masked sum of true field values at alive robot positions."""
    alive = [r for r in world.robots if r.alive]
    if not alive:
        return 0.0
    pos = np.array([r.position for r in alive])
    caps = np.array([r.capabilities for r in alive])
    q = 0.0
    for fld in world.fields:
        sel = caps[:, fld.event_type] == 1
        if sel.any():
            q += float(np.sum(fld.value(pos[sel])))
    return q


def build_failure_schedule(config, rng):
    f = config.failure_count
    if f == 0:
        return FailureSchedule()
    lo, hi = config.failure_window
    ids = rng.choice(config.num_robots, size=f, replace=False)
    steps = rng.choice(np.arange(lo, hi + 1), size=f, replace=False)
    return FailureSchedule(tuple(sorted((int(s), int(r)) for s, r in zip(steps, ids))))


def random_capabilities(n, e, rng):
    # Uniform over the 2^e - 1 nonempty subsets.
    codes = rng.integers(1, 2**e, size=n)
    return ((codes[:, None] >> np.arange(e)) & 1).astype(np.int8)


def random_start_positions(n, center, radius, size, rng):
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    theta = rng.uniform(0.0, 2 * np.pi, n)
    pts = np.asarray(center, dtype=float) + np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    return np.clip(pts, 0.0, size)


def init_world(config):
    """Build the initial world and strategy for ``config`` from its seed."""
    streams = make_streams(config.seed)
    n, e = config.num_robots, config.num_event_types
    caps = random_capabilities(n, e, streams["capabilities"])
    fields = generate_events(config, streams["events"])
    pos = random_start_positions(n, config.start_area.center, config.start_area.radius, config.environment_size, streams["start"])
    schedule = build_failure_schedule(config, streams["failures"])
    picks = choose_single_capabilities(caps, streams["single_capability"])
    robots = [RobotState(i, pos[i], caps[i], True) for i in range(n)]
    kind = StrategyKind.of(config.strategy, picks if config.strategy is Strategy.SINGLE_CAPABILITY else None)
    world = WorldState(
        robots=robots,
        fields=fields,
        t=0,
        W_prev=init_weights(caps),
        alive_ids=tuple(range(n)),
        schedule=schedule,
        environment_size=config.environment_size,
        step_size=config.step_size,
    )
    world.weights = _full_weights(world, world.W_prev, world.alive_ids)
    return world, kind


def make_world(robots, fields, schedule=FailureSchedule(), environment_size=100.0, step_size=1.0, W_prev=None):
    """World at t=0 from explicit parts, for hand-built scenarios.

    ``W_prev`` defaults to uniform weights over each alive robot's capabilities.
    """
    robots = list(robots)
    alive = [r for r in robots if r.alive]
    ids = tuple(r.id for r in alive)
    if W_prev is None:
        W_prev = init_weights(np.array([r.capabilities for r in alive]).reshape(len(alive), len(fields)))
    world = WorldState(
        robots=robots,
        fields=list(fields),
        t=0,
        W_prev=np.asarray(W_prev, dtype=float),
        alive_ids=ids,
        schedule=schedule,
        environment_size=environment_size,
        step_size=step_size,
    )
    world.weights = _full_weights(world, world.W_prev, ids)
    return world


def _full_weights(world, W, ids):
    full = np.zeros((len(world.robots), len(world.fields)))
    if len(ids):
        full[list(ids)] = W
    return full


def step(world, strategy, params, gamma1, gamma2):
    """Advance one time step: failures, utilities, weights, movement."""
    t_next = world.t + 1
    dying = set(world.schedule.at(t_next))
    robots = [replace(r, alive=False) if r.id in dying else r for r in world.robots]
    alive = [r for r in robots if r.alive]
    ids = tuple(r.id for r in alive)

    keep = [k for k, rid in enumerate(world.alive_ids) if rid not in dying]
    W_prev = world.W_prev[keep]
    iters, unconverged = world.solver_iterations, world.unconverged_solves

    if alive:
        util = build_utility(alive, world.fields, world.step_size)
        C = np.array([r.capabilities for r in alive], dtype=float)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NoConvergence)
            W, res = compute_weights(strategy, util.values, W_prev, C, params, gamma1, gamma2, robot_ids=ids)
        if res is not None:
            iters += res.n_iter
            if not res.converged:
                unconverged += 1
                logger.debug("t=%d: solver stopped after %d iterations (change %.3g)", t_next, res.n_iter, res.change)
        moved = {}
        for row, r in enumerate(alive):
            disp = blend_movement(W[row], util.directions[row])
            moved[r.id] = np.clip(r.position + disp, 0.0, world.environment_size)
        robots = [replace(r, position=moved[r.id]) if r.id in moved else r for r in robots]
    else:
        W = np.zeros((0, len(world.fields)))

    nxt = replace(
        world,
        robots=robots,
        t=t_next,
        W_prev=W,
        alive_ids=ids,
        solver_iterations=iters,
        unconverged_solves=unconverged,
    )
    nxt.weights = _full_weights(nxt, W, ids)
    return nxt


def run_trial(config, params=None, record=False):
    """Simulate one seeded trial for ``config.horizon`` steps.

    With ``record=True`` the result also carries per-step positions, alive
    flags and full weight matrices.
    """
    validate_config(config)
    params = config.solver if params is None else params
    world, kind = init_world(config)
    T = config.horizon
    quality = np.empty(T + 1)
    quality[0] = sensing_quality(world)
    if record:
        n, e = config.num_robots, config.num_event_types
        positions = np.empty((T + 1, n, 2))
        alive = np.empty((T + 1, n), dtype=bool)
        weights = np.empty((T + 1, n, e))
        positions[0] = [r.position for r in world.robots]
        alive[0] = True
        weights[0] = world.weights
    for t in range(T):
        world = step(world, kind, params, config.gamma1, config.gamma2)
        quality[t + 1] = sensing_quality(world)
        if record:
            positions[t + 1] = [r.position for r in world.robots]
            alive[t + 1] = [r.alive for r in world.robots]
            weights[t + 1] = world.weights

    q0 = quality[0]
    if q0 > 0:
        improvement = quality[-1] / q0
        peak = quality.max() / q0
    else:
        improvement = peak = float("nan")
    return TrialResult(
        quality_trace=quality,
        improvement=float(improvement),
        peak_improvement=float(peak),
        failure_events=world.schedule,
        config=config_to_dict(config),
        seed=config.seed,
        strategy=config.strategy.value,
        events=[s.as_record() for fld in world.fields for s in fld.sources],
        solver_iterations=world.solver_iterations,
        unconverged_solves=world.unconverged_solves,
        positions=positions if record else None,
        alive=alive if record else None,
        weights=weights if record else None,
    )
