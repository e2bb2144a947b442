import json
import math
import random

import numpy as np
import pytest

from hetcover.domain import SimConfig, Strategy, derive_seed
from hetcover.experiment import (
    BatchSpec,
    OracleReport,
    SUMMARY_COLUMNS,
    batch_configs,
    fmt,
    load_batch_spec,
    oracle_check,
    paired_sign_test,
    random_oracle_instance,
    run_batch,
    summarize,
    write_summary_csv,
)


def tiny_spec(**kw):
    base = dict(
        num_robots=(3,),
        num_event_types=(2,),
        failures=(0, 1),
        strategies=("full", "equally_weighted"),
        trials_per_cell=3,
        base_seed=5,
        base={"horizon": 12, "failure_window": [2, 8]},
    )
    base.update(kw)
    return BatchSpec(**base)


@pytest.mark.parametrize(
    "value, text",
    [(1.0, "1"), (1234567.0, "1.23457e+06"), (0.000123456789, "0.000123457"), (3, "3"), (True, "1"), (2.5, "2.5")],
)
def test_fmt_six_significant_digits(value, text):
    assert fmt(value) == text


def test_default_grid_has_96_cells():
    assert len(BatchSpec().cells()) == 96


def test_seeds_are_paired_across_strategies():
    jobs = batch_configs(tiny_spec())
    seeds = {}
    for (n, e, f, s), r, cfg in jobs:
        seeds.setdefault((n, e, f), {}).setdefault(s, []).append(cfg.seed)
        assert cfg.seed == derive_seed(5, n, e, f, r)
        assert cfg.horizon == 12 and cfg.strategy is Strategy.parse(s)
    for per in seeds.values():
        assert per["full"] == per["equally_weighted"]


def test_smoke_grid_row_count(tmp_path):
    spec = BatchSpec(trials_per_cell=1, base={"horizon": 4, "failure_window": [1, 4]})
    records = run_batch(spec)
    rows = summarize(records, spec.gamma1, spec.gamma2)
    assert len(rows) == 96
    assert all(r["trials"] == 1 and r["errors"] == 0 for r in rows)
    write_summary_csv(rows, tmp_path / "summary.csv")
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert lines[0] == ",".join(SUMMARY_COLUMNS) and len(lines) == 97


def test_summary_is_order_independent():
    records = run_batch(tiny_spec())
    shuffled = list(records)
    random.Random(0).shuffle(shuffled)
    assert summarize(records) == summarize(shuffled)


def test_summary_statistics():
    recs = [
        {"num_robots": 2, "num_event_types": 1, "failures": 0, "strategy": "full", "improvement": x, "peak_improvement": x + 1, "config": {"gamma1": 1.0, "gamma2": 0.5}}
        for x in (1.0, 2.0, 4.0)
    ]
    recs.append({"num_robots": 2, "num_event_types": 1, "failures": 0, "strategy": "full", "error": "boom"})
    (row,) = summarize(recs)
    assert row["mean_improvement"] == pytest.approx(7 / 3)
    assert row["std_improvement"] == pytest.approx(np.std([1, 2, 4], ddof=1))
    assert row["mean_peak_improvement"] == pytest.approx(10 / 3)
    assert row["trials"] == 3 and row["errors"] == 1
    assert row["gamma1"] == 1.0 and row["gamma2"] == 0.5


def test_single_trial_std_is_nan():
    recs = [{"num_robots": 2, "num_event_types": 1, "failures": 0, "strategy": "full", "improvement": 2.0, "peak_improvement": 2.0}]
    assert math.isnan(summarize(recs, 1.0, 0.5)[0]["std_improvement"])


def test_failing_trials_are_recorded_and_batch_continues():
    spec = tiny_spec(failures=(0, 3), trials_per_cell=2)
    records = run_batch(spec)
    bad = [r for r in records if r["failures"] == 3]
    good = [r for r in records if r["failures"] == 0]
    assert bad and all("InvalidConfig" in r["error"] for r in bad)
    assert good and all(r["error"] is None and r["improvement"] > 0 for r in good)
    rows = summarize(records)
    assert {(r["failures"], r["errors"]) for r in rows} == {(0, 0), (3, 2)}


def test_parallel_batch_matches_serial():
    spec = tiny_spec(trials_per_cell=2)
    assert run_batch(spec, jobs=2) == run_batch(spec, jobs=1)


def test_load_batch_spec(tmp_path):
    path = tmp_path / "batch.json"
    path.write_text(json.dumps({"num_robots": [5], "trials_per_cell": 2, "gamma1": 0.3}))
    spec = load_batch_spec(path)
    assert spec.num_robots == (5,) and spec.trials_per_cell == 2 and spec.gamma1 == 0.3
    path.write_text(json.dumps({"repeats": 3}))
    with pytest.raises(ValueError, match="repeats"):
        load_batch_spec(path)


def test_paired_sign_test():
    w, l, p = paired_sign_test([2, 3, 4, 5, 1], [1, 1, 1, 1, 1])
    assert (w, l) == (4, 0) and p == pytest.approx(1 / 16)
    assert paired_sign_test([1, 1], [1, 1]) == (0, 0, 1.0)
    with pytest.raises(ValueError):
        paired_sign_test([1], [1, 2])


def test_oracle_instances_fit_budget(rng):
    for _ in range(200):
        S, Wp, C, g1, g2 = random_oracle_instance(rng)
        n, e = S.shape
        assert 1 <= n <= 3 and 1 <= e <= 3
        assert (S >= 0).all() and (S <= 10).all() and (S[C == 0] == 0).all()
        np.testing.assert_allclose(Wp.sum(axis=1), 1.0)
        assert g1 in (0.0, 0.5, 2.0) and g2 in (0.0, 0.5, 2.0)


def test_oracle_check_small_run():
    report = oracle_check(count=8, seed=3, resolution=0.05)
    assert report.ratios.shape == (8,)
    assert report.passed


def test_oracle_single_event_ratio_is_one():
    report = oracle_check(count=30, seed=11, resolution=0.05)
    single = [r for r, shape in zip(report.ratios, report.shapes) if shape[1] == 1]
    assert single and all(r == pytest.approx(1.0, abs=1e-12) for r in single)


def test_oracle_report_thresholds():
    def rep(ratios, gammas):
        return OracleReport(np.array(ratios), np.array(gammas, float), [(1, 1)] * len(ratios), np.zeros(len(ratios)))

    assert rep([1.0, 0.96], [[0.5, 0], [0, 0.5]]).passed
    assert rep([1.0] * 9 + [0.79], [[1, 1]] * 10).violations() == ["min ratio 0.7900 < 0.8"]
    assert any("mean" in v for v in rep([0.9, 0.9], [[1, 1]] * 2).violations())
    assert any("linear" in v for v in rep([1.0, 0.9, 1.0, 1.0, 1.0], [[1, 1], [0, 0], [1, 1], [1, 1], [1, 1]]).violations())
