"""Batch experiments, oracle validation and the on-disk output formats."""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest

from .domain import InvalidConfig, SimConfig, SolverParams, Strategy, config_from_dict, config_to_dict, derive_seed
from .simulator import run_trial
from .solver import TooLarge, objective, oracle_solve, solve_weights

__all__ = [
    "BatchSpec",
    "OracleReport",
    "DEFAULT_GRID",
    "SUMMARY_COLUMNS",
    "TRACE_COLUMNS",
    "batch_configs",
    "fmt",
    "load_batch_spec",
    "paired_sign_test",
    "oracle_check",
    "random_oracle_instance",
    "run_batch",
    "summarize",
    "write_result_json",
    "write_summary_csv",
    "write_trace_csv",
    "write_trials_jsonl",
]

TRACE_COLUMNS = ("t", "robot_id", "x", "y", "alive", "q_total")
SUMMARY_COLUMNS = (
    "num_robots",
    "num_event_types",
    "failures",
    "strategy",
    "mean_improvement",
    "std_improvement",
    "mean_peak_improvement",
    "trials",
    "errors",
    "gamma1",
    "gamma2",
)

DEFAULT_GRID = {
    "num_robots": (5, 10),
    "num_event_types": (2, 3, 4),
    "failures": (0, 1, 2, 3),
    "strategies": tuple(s.value for s in Strategy),
}

ORACLE_MIN_RATIO = 0.80
ORACLE_MEAN_RATIO = 0.95
ORACLE_LINEAR_SLACK = 0.05
ORACLE_GAMMAS = (0.0, 0.5, 2.0)


def fmt(x):
    """CSV number formatting: six significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.6g}"


@dataclass(frozen=True)
class BatchSpec:
    """Grid of (N, E, failures, strategy) cells and how to seed them.

    ``base`` holds extra :class:`SimConfig` fields applied to every trial
    (e.g. ``horizon``).
    """

    num_robots: tuple = DEFAULT_GRID["num_robots"]
    num_event_types: tuple = DEFAULT_GRID["num_event_types"]
    failures: tuple = DEFAULT_GRID["failures"]
    strategies: tuple = DEFAULT_GRID["strategies"]
    trials_per_cell: int = 100
    base_seed: int = 0
    gamma1: float = 1.0
    gamma2: float = 0.5
    base: dict = field(default_factory=dict)

    def cells(self):
        return [
            (n, e, f, Strategy.parse(s).value)
            for n in self.num_robots
            for e in self.num_event_types
            for f in self.failures
            for s in self.strategies
        ]

    def to_dict(self):
        d = asdict(self)
        for k in ("num_robots", "num_event_types", "failures", "strategies"):
            d[k] = list(d[k])
        return d


def load_batch_spec(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    known = set(BatchSpec.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidConfig([f"unknown batch field {k!r}" for k in unknown])
    for k in ("num_robots", "num_event_types", "failures", "strategies"):
        if k in data:
            data[k] = tuple(data[k])
    return BatchSpec(**data)


def batch_configs(spec):
    """One ``(cell, replicate, SimConfig)`` per trial, in grid order.

    The seed depends on (N, E, failures, replicate) only, so every strategy
    of a cell sees the same worlds.
    """
    out = []
    for cell in spec.cells():
        n, e, f, s = cell
        template = config_from_dict(
            {
                **spec.base,
                "num_robots": n,
                "num_event_types": e,
                "failure_count": f,
                "strategy": s,
                "gamma1": spec.gamma1,
                "gamma2": spec.gamma2,
            }
        )
        for r in range(spec.trials_per_cell):
            out.append((cell, r, template.with_overrides(seed=derive_seed(spec.base_seed, n, e, f, r))))
    return out


def _trial_record(job):
    cell, r, cfg = job
    n, e, f, s = cell
    rec = {"num_robots": n, "num_event_types": e, "failures": f, "strategy": s, "replicate": r, "seed": cfg.seed}
    try:
        res = run_trial(cfg)
    except Exception as exc:  # recorded, the batch carries on
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["config"] = config_to_dict(cfg)
        return rec
    rec.update(res.to_dict())
    rec["error"] = None
    return rec


def run_batch(spec, jobs=1):
    """Run every trial of ``spec``; records come back in grid order."""
    work = batch_configs(spec)
    if jobs is None or jobs <= 1:
        return [_trial_record(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_trial_record, work, chunksize=max(1, len(work) // (8 * jobs))))


def summarize(records, gamma1=None, gamma2=None):
    """Per-cell aggregates, independent of record order.

    Means use exactly rounded sums; std is the sample standard deviation
    (``nan`` below two trials). Errored and ``nan`` trials count in
    ``errors`` only.
    """
    groups = {}
    for rec in records:
        key = (rec["num_robots"], rec["num_event_types"], rec["failures"], rec["strategy"])
        groups.setdefault(key, []).append(rec)

    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], _strategy_rank(k[3]))):
        recs = groups[key]
        ok = [r for r in recs if not r.get("error") and math.isfinite(r["improvement"])]
        imp = [r["improvement"] for r in ok]
        peak = [r["peak_improvement"] for r in ok]
        n = len(imp)
        mean = math.fsum(imp) / n if n else math.nan
        std = math.sqrt(math.fsum((x - mean) ** 2 for x in imp) / (n - 1)) if n > 1 else math.nan
        g1 = gamma1 if gamma1 is not None else _echo(ok or recs, "gamma1")
        g2 = gamma2 if gamma2 is not None else _echo(ok or recs, "gamma2")
        rows.append(
            {
                "num_robots": key[0],
                "num_event_types": key[1],
                "failures": key[2],
                "strategy": key[3],
                "mean_improvement": mean,
                "std_improvement": std,
                "mean_peak_improvement": math.fsum(peak) / n if n else math.nan,
                "trials": n,
                "errors": len(recs) - n,
                "gamma1": g1,
                "gamma2": g2,
            }
        )
    return rows


def paired_sign_test(a, b):
    """One-sided sign test that paired samples ``a`` tend to exceed ``b``.

    Ties are dropped. Returns ``(wins, losses, p_value)``; the p-value is 1.0
    when every pair ties.
    """
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("paired samples must have the same shape")
    wins, losses = int(np.sum(a > b)), int(np.sum(a < b))
    if wins + losses == 0:
        return wins, losses, 1.0
    return wins, losses, float(binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue)


def _strategy_rank(name):
    order = [s.value for s in Strategy]
    return order.index(name) if name in order else len(order)


def _echo(recs, name):
    for r in recs:
        if "config" in r:
            return r["config"][name]
    return math.nan


def write_summary_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([row[c] if c == "strategy" else fmt(row[c]) for c in SUMMARY_COLUMNS])


def write_trials_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def write_trace_csv(result, path):
    """Per-step, per-robot rows; needs a result produced with ``record=True``."""
    if result.positions is None:
        raise ValueError("trace needs a trial run with record=True")
    T1, n, _ = result.positions.shape
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t in range(T1):
            q = fmt(result.quality_trace[t])
            for i in range(n):
                x, y = result.positions[t, i]
                w.writerow([t, i, fmt(x), fmt(y), int(result.alive[t, i]), q])


def write_result_json(result, path):
    text = json.dumps(result.to_dict(), indent=2, sort_keys=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    return text


# ---------------------------------------------------------------- oracle check


@dataclass
class OracleReport:
    ratios: np.ndarray
    gammas: np.ndarray  # (count, 2)
    shapes: list
    iterations: np.ndarray

    @property
    def linear(self):
        return np.all(self.gammas == 0, axis=1)

    @property
    def min_ratio(self):
        return float(self.ratios.min())

    @property
    def mean_ratio(self):
        return float(self.ratios.mean())

    @property
    def linear_error(self):
        sel = self.linear
        return float(np.max(np.abs(self.ratios[sel] - 1.0))) if sel.any() else 0.0

    def violations(self):
        out = []
        if self.mean_ratio < ORACLE_MEAN_RATIO:
            out.append(f"mean ratio {self.mean_ratio:.4f} < {ORACLE_MEAN_RATIO}")
        if self.min_ratio < ORACLE_MIN_RATIO:
            out.append(f"min ratio {self.min_ratio:.4f} < {ORACLE_MIN_RATIO}")
        if self.linear_error > ORACLE_LINEAR_SLACK:
            out.append(f"linear-case ratio off by {self.linear_error:.4f} > {ORACLE_LINEAR_SLACK}")
        return out

    @property
    def passed(self):
        return not self.violations()


def random_oracle_instance(rng, resolution=0.02, max_cells=10**8):
    """Small random instance whose joint grid fits the oracle budget.

    Draws N and E in {1, 2, 3}, nonempty capability rows, utilities in
    [0, 10] on capable entries, a Dirichlet previous weight matrix and
    gammas from {0, 0.5, 2}. Draws over budget are discarded and redrawn.
    """
    steps = int(round(1.0 / resolution))
    while True:
        n = int(rng.integers(1, 4))
        e = int(rng.integers(1, 4))
        codes = rng.integers(1, 2**e, size=n)
        C = ((codes[:, None] >> np.arange(e)) & 1).astype(float)
        S = rng.uniform(0.0, 10.0, (n, e)) * C
        W_prev = np.zeros((n, e))
        for i in range(n):
            idx = np.flatnonzero(C[i])
            W_prev[i, idx] = rng.dirichlet(np.ones(idx.size))
        g1, g2 = (float(g) for g in rng.choice(ORACLE_GAMMAS, size=2))
        cells = math.prod(math.comb(steps + int(k) - 1, int(k) - 1) for k in C.sum(axis=1))
        if cells <= max_cells:
            return S, W_prev, C, g1, g2


def oracle_check(count=50, seed=0, resolution=0.02, params=SolverParams(), max_cells=10**8):
    """Compare the ALM solution with the grid oracle on ``count`` random instances."""
    rng = np.random.default_rng(seed)
    ratios, gammas, shapes, iters = [], [], [], []
    for _ in range(count):
        while True:
            S, Wp, C, g1, g2 = random_oracle_instance(rng, resolution, max_cells)
            try:
                W_or = oracle_solve(S, Wp, C, g1, g2, resolution=resolution, max_cells=max_cells)
                break
            except TooLarge:
                continue
        res = solve_weights(S, Wp, C, params, g1, g2)
        f_alm = objective(res.weights, S, Wp, g1, g2)
        f_or = objective(W_or, S, Wp, g1, g2)
        ratios.append(f_alm / f_or)
        gammas.append((g1, g2))
        shapes.append(S.shape)
        iters.append(res.n_iter)
    return OracleReport(np.array(ratios), np.array(gammas).reshape(-1, 2), shapes, np.array(iters))


def default_out_dir():
    return os.environ.get("HETCOVER_OUT", "results")


def config_with_overrides(path, **overrides):
    """Load a run config (defaults when ``path`` is None) and apply CLI overrides."""
    if path is None:
        cfg = SimConfig(num_robots=5, num_event_types=2)
    else:
        with open(path, encoding="utf-8") as fh:
            cfg = config_from_dict(json.load(fh))
    return cfg.with_overrides(**overrides)
