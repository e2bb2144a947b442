"""Command line entry point: ``run``, ``batch`` and ``oracle-check``."""

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import __version__
from .domain import InvalidConfig
from .experiment import (
    BatchSpec,
    config_with_overrides,
    default_out_dir,
    fmt,
    load_batch_spec,
    oracle_check,
    run_batch,
    summarize,
    write_result_json,
    write_summary_csv,
    write_trace_csv,
    write_trials_jsonl,
)
from .simulator import run_trial
from .solver import SingularSystem, ZeroCapabilityRow

logger = logging.getLogger("hetcover")


def _u64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer (got {text})")
    return value


def _nonneg_float(text):
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number (got {text})")
    return value


def build_parser():
    p = argparse.ArgumentParser(prog="hetcover", description="Heterogeneous multi-robot coverage experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output directory (default: $HETCOVER_OUT or ./results)")
        sp.add_argument("--seed", type=_u64)
        sp.add_argument("--gamma1", type=_nonneg_float)
        sp.add_argument("--gamma2", type=_nonneg_float)

    run = sub.add_parser("run", help="simulate one seeded trial")
    common(run)
    run.add_argument("--strategy")
    run.add_argument("--failures", type=int)

    batch = sub.add_parser("batch", help="run a grid of paired-seed trials")
    common(batch)
    batch.add_argument("--strategy", action="append", help="restrict to this strategy (repeatable)")
    batch.add_argument("--failures", type=int, action="append", help="restrict to this failure count (repeatable)")
    batch.add_argument("--trials", type=int, help="trials per cell")
    batch.add_argument("--jobs", type=int, default=1, help="worker processes")

    oc = sub.add_parser("oracle-check", help="compare the solver with the grid oracle")
    oc.add_argument("--count", type=int, default=50)
    oc.add_argument("--seed", type=_u64, default=0)
    oc.add_argument("--resolution", type=float, default=0.02)
    oc.add_argument("--out", help="also write per-instance ratios to <out>/oracle.csv")
    return p


def _out_dir(args):
    out = args.out or default_out_dir()
    os.makedirs(out, exist_ok=True)
    return out


def cmd_run(args):
    cfg = config_with_overrides(
        args.config,
        seed=args.seed,
        strategy=args.strategy,
        failure_count=args.failures,
        gamma1=args.gamma1,
        gamma2=args.gamma2,
    )
    result = run_trial(cfg, record=True)
    out = _out_dir(args)
    write_trace_csv(result, os.path.join(out, "trace.csv"))
    write_result_json(result, os.path.join(out, "result.json"))
    print(f"{cfg.strategy.value}: improvement {fmt(result.improvement)}, peak {fmt(result.peak_improvement)} -> {out}")
    return 0


def cmd_batch(args):
    spec = load_batch_spec(args.config) if args.config else BatchSpec()
    changes = {
        "base_seed": args.seed,
        "gamma1": args.gamma1,
        "gamma2": args.gamma2,
        "trials_per_cell": args.trials,
        "strategies": tuple(args.strategy) if args.strategy else None,
        "failures": tuple(args.failures) if args.failures else None,
    }
    spec = replace(spec, **{k: v for k, v in changes.items() if v is not None})
    start = time.perf_counter()
    records = run_batch(spec, jobs=args.jobs)
    rows = summarize(records, spec.gamma1, spec.gamma2)
    out = _out_dir(args)
    write_summary_csv(rows, os.path.join(out, "summary.csv"))
    write_trials_jsonl(records, os.path.join(out, "trials.jsonl"))
    with open(os.path.join(out, "batch.json"), "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    errors = sum(r["errors"] for r in rows)
    print(
        f"{len(records)} trials in {len(rows)} cells, {errors} errors, "
        f"{time.perf_counter() - start:.1f}s (gamma1={spec.gamma1}, gamma2={spec.gamma2}) -> {out}"
    )
    return 0


def cmd_oracle_check(args):
    report = oracle_check(args.count, args.seed, args.resolution)
    for k, (r, g, shape, it) in enumerate(zip(report.ratios, report.gammas, report.shapes, report.iterations)):
        logger.info("instance %d: N=%d E=%d gamma=(%g, %g) iters=%d ratio=%.6f", k, *shape, *g, it, r)
    if args.out:
        out = _out_dir(args)
        with open(os.path.join(out, "oracle.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("instance", "num_robots", "num_event_types", "gamma1", "gamma2", "iterations", "ratio"))
            for k, (r, g, shape, it) in enumerate(zip(report.ratios, report.gammas, report.shapes, report.iterations)):
                w.writerow((k, *shape, fmt(g[0]), fmt(g[1]), it, fmt(r)))
    lin = int(np.sum(report.linear))
    print(
        f"{args.count} instances: mean ratio {report.mean_ratio:.6f}, min ratio {report.min_ratio:.6f}, "
        f"linear subset ({lin}) max deviation {report.linear_error:.6f}"
    )
    bad = report.violations()
    for msg in bad:
        print(f"FAIL: {msg}", file=sys.stderr)
    return 1 if bad else 0


COMMANDS = {"run": cmd_run, "batch": cmd_batch, "oracle-check": cmd_oracle_check}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InvalidConfig, ZeroCapabilityRow, SingularSystem, ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
