"""Core data types, configuration and validation shared across the package."""

import enum
import json
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

__all__ = [
    "InvalidConfig",
    "RobotState",
    "SimConfig",
    "SolverParams",
    "StartArea",
    "Strategy",
    "STREAM_NAMES",
    "config_from_dict",
    "config_to_dict",
    "derive_seed",
    "dump_config",
    "load_config",
    "make_streams",
    "validate_config",
    "validate_solver_params",
]

UINT64_MAX = 2**64 - 1

# Order is part of the reproducibility contract: appending is safe, reordering is not.
STREAM_NAMES = ("capabilities", "events", "start", "failures", "single_capability")


class InvalidConfig(ValueError):
    """Raised when a configuration violates one or more invariants.

    The individual problems are kept in ``violations`` so callers can report
    all of them at once.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class Strategy(str, enum.Enum):
    FULL = "full"
    BASELINE = "baseline"
    EQUALLY_WEIGHTED = "equally_weighted"
    SINGLE_CAPABILITY = "single_capability"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "equallyweighted": cls.EQUALLY_WEIGHTED,
            "singlecapability": cls.SINGLE_CAPABILITY,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown strategy {value!r} (expected one of {names})") from None


@dataclass
class RobotState:
    """One team member: position, binary capability vector and alive flag."""

    id: int
    position: np.ndarray
    capabilities: np.ndarray
    alive: bool = True

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)
        caps = np.asarray(self.capabilities)
        if caps.ndim != 1 or not ((caps == 0) | (caps == 1)).all():
            raise ValueError(f"robot {self.id}: capabilities must be a 0/1 vector, got {caps!r}")
        self.capabilities = caps.astype(np.int8)

    def can_sense(self, event_type):
        return self.alive and bool(self.capabilities[event_type])


@dataclass(frozen=True)
class SolverParams:
    """Settings of the augmented-Lagrangian weight solver.

    ``proximal`` is the weight of the damping term ``||W - W^k||^2 / 2`` added
    to every subproblem. It keeps the linear system positive definite when
    ``gamma2 == 0``.
    """

    mu0: float = 1.0
    rho: float = 1.5
    tol: float = 1e-7
    max_iter: int = 200
    column_norm_epsilon: float = 1e-9
    proximal: float = 0.1
    update: str = "linearized"


@dataclass(frozen=True)
class StartArea:
    center: tuple = (50.0, 50.0)
    radius: float = 5.0


@dataclass(frozen=True)
class SimConfig:
    num_robots: int
    num_event_types: int
    sources_per_event: int = 2
    horizon: int = 75
    gamma1: float = 1.0
    gamma2: float = 0.5
    environment_size: float = 100.0
    start_area: StartArea = field(default_factory=StartArea)
    failure_count: int = 0
    failure_window: tuple = (10, 60)
    strategy: Strategy = Strategy.FULL
    seed: int = 0
    amplitude: float = 10.0
    sigma: float = 10.0
    step_size: float = 1.0
    solver: SolverParams = field(default_factory=SolverParams)

    def with_overrides(self, **changes):
        changes = {k: v for k, v in changes.items() if v is not None}
        if "strategy" in changes:
            changes["strategy"] = Strategy.parse(changes["strategy"])
        return replace(self, **changes)


def _is_int(x):
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _solver_violations(params):
    out = []
    if not params.mu0 > 0:
        out.append(f"solver.mu0 must be > 0 (got {params.mu0})")
    if not 1 < params.rho < 2:
        out.append(f"solver.rho must lie in (1, 2) (got {params.rho})")
    if not params.tol > 0:
        out.append(f"solver.tol must be > 0 (got {params.tol})")
    if not (_is_int(params.max_iter) and params.max_iter > 0):
        out.append(f"solver.max_iter must be a positive integer (got {params.max_iter})")
    if not params.column_norm_epsilon > 0:
        out.append(f"solver.column_norm_epsilon must be > 0 (got {params.column_norm_epsilon})")
    if not params.proximal >= 0:
        out.append(f"solver.proximal must be >= 0 (got {params.proximal})")
    if params.update not in ("linearized", "closed_form"):
        out.append(f"solver.update must be 'linearized' or 'closed_form' (got {params.update!r})")
    return out


def validate_solver_params(params):
    violations = _solver_violations(params)
    if violations:
        raise InvalidConfig(violations)
    return params


def validate_config(config):
    """Check every invariant of ``config``; return it unchanged when valid.

    Raises
    ------
    InvalidConfig
        Carrying one message per violated invariant.
    """
    v = []
    for name in ("num_robots", "num_event_types", "sources_per_event"):
        value = getattr(config, name)
        if not (_is_int(value) and value > 0):
            v.append(f"{name} must be a positive integer (got {value!r})")
    if not (_is_int(config.horizon) and config.horizon >= 0):
        v.append(f"horizon must be a nonnegative integer (got {config.horizon!r})")
    for name in ("gamma1", "gamma2"):
        if not getattr(config, name) >= 0:
            v.append(f"{name} must be >= 0 (got {getattr(config, name)})")
    for name in ("environment_size", "amplitude", "sigma", "step_size"):
        if not getattr(config, name) > 0:
            v.append(f"{name} must be > 0 (got {getattr(config, name)})")
    if not config.start_area.radius >= 0:
        v.append(f"start_area.radius must be >= 0 (got {config.start_area.radius})")
    if len(config.start_area.center) != 2:
        v.append("start_area.center must be a 2-vector")
    elif not all(0 <= c <= config.environment_size for c in config.start_area.center):
        v.append("start_area.center must lie inside the environment square")

    n = config.num_robots
    f = config.failure_count
    if not _is_int(f) or f < 0:
        v.append(f"failure_count must be a nonnegative integer (got {f!r})")
    elif _is_int(n) and f >= n:
        v.append(f"failure_count must be < num_robots (got failure_count={f}, num_robots={n})")
    elif f > 0:
        lo, hi = config.failure_window
        if not (_is_int(lo) and _is_int(hi) and 1 <= lo <= hi <= config.horizon):
            v.append(
                f"failure_window {tuple(config.failure_window)} must satisfy 1 <= lo <= hi <= horizon={config.horizon}"
            )
        elif hi - lo + 1 < f:
            v.append(f"failure_window {tuple(config.failure_window)} holds fewer than {f} distinct steps")

    if not isinstance(config.strategy, Strategy):
        v.append(f"strategy must be a Strategy (got {config.strategy!r})")
    if not (_is_int(config.seed) and 0 <= config.seed <= UINT64_MAX):
        v.append(f"seed must be an unsigned 64-bit integer (got {config.seed!r})")
    v.extend(_solver_violations(config.solver))

    if v:
        raise InvalidConfig(v)
    if config.num_event_types > config.num_robots:
        warnings.warn(
            f"num_event_types={config.num_event_types} exceeds num_robots={config.num_robots}; "
            "some event types cannot be covered",
            stacklevel=2,
        )
    return config


def config_to_dict(config):
    d = asdict(config)
    d["strategy"] = config.strategy.value
    d["start_area"]["center"] = [float(c) for c in config.start_area.center]
    d["failure_window"] = list(config.failure_window)
    return d


def config_from_dict(data):
    data = dict(data)
    unknown = set(data) - set(SimConfig.__dataclass_fields__)
    if unknown:
        raise InvalidConfig([f"unknown config field {k!r}" for k in sorted(unknown)])
    missing = [k for k in ("num_robots", "num_event_types") if k not in data]
    if missing:
        raise InvalidConfig([f"missing required field {k!r}" for k in missing])
    if "start_area" in data:
        sa = dict(data["start_area"])
        if "center" in sa:
            sa["center"] = tuple(float(c) for c in sa["center"])
        data["start_area"] = StartArea(**sa)
    if "failure_window" in data:
        data["failure_window"] = tuple(data["failure_window"])
    if "strategy" in data:
        try:
            data["strategy"] = Strategy.parse(data["strategy"])
        except ValueError as exc:
            raise InvalidConfig([str(exc)]) from None
    if "solver" in data:
        data["solver"] = SolverParams(**data["solver"])
    return SimConfig(**data)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


def dump_config(config, path=None):
    text = json.dumps(config_to_dict(config), indent=2)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return text


def make_streams(seed):
    """Independent generators, one per named stream, all derived from ``seed``."""
    return {
        name: np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(i,)))
        for i, name in enumerate(STREAM_NAMES)
    }


def derive_seed(base_seed, *keys):
    """Deterministic 64-bit seed for a (cell, replicate) style key tuple."""
    entropy = [int(base_seed)] + [int(k) for k in keys]
    state = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
