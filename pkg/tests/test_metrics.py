"""Summary statistics and method comparisons over repetition records."""

import math

import numpy as np
import pytest

from scop import (
    Comparison,
    ExperimentConfig,
    MethodRep,
    MethodSummary,
    RepRecord,
    TCons,
    compare,
    run_experiment,
    summarize,
    summarize_records,
)

SEED = 424242


def record(rep, fcp, avg_length, infinite=False, n_selected=10, method="scop") -> RepRecord:
    return RepRecord(
        rep=rep,
        n_selected=n_selected,
        fdp=None,
        flags=(),
        methods={method: MethodRep(fcp=fcp, avg_length=avg_length, infinite=infinite)},
    )


def summary(fcr=0.1, fcr_se=0.01, mean_length=5.0, n_reps=100) -> MethodSummary:
    return MethodSummary(
        method="scop",
        fcr=fcr,
        fcr_se=fcr_se,
        mean_length=mean_length,
        infinite_rep_count=0,
        mean_selected=12.0,
        n_reps=n_reps,
    )


# --------------------------------------------------------------------------
# summarize_records


def test_fcr_is_mean_of_fcps():
    records = [record(0, 0.0, 3.0), record(1, 0.2, 5.0)]
    s = summarize_records(records, "scop")
    assert s.fcr == pytest.approx(0.1)
    assert s.mean_length == pytest.approx(4.0)
    assert s.n_reps == 2
    assert s.infinite_rep_count == 0


def test_single_repetition_has_no_standard_error():
    s = summarize_records([record(0, 0.1, 2.0)], "scop")
    assert s.fcr_se is None
    s2 = summarize_records([record(0, 0.1, 2.0), record(1, 0.1, 2.0)], "scop")
    assert s2.fcr_se == 0.0


def test_summary_matches_manual_recomputation():
    rng = np.random.default_rng(SEED)
    records = []
    for rep in range(200):
        infinite = rng.random() < 0.1
        empty = rng.random() < 0.05
        records.append(
            record(
                rep,
                fcp=0.0 if empty else float(rng.uniform(0, 0.4)),
                avg_length=None if empty else (math.inf if infinite else float(rng.uniform(1, 9))),
                infinite=infinite and not empty,
                n_selected=0 if empty else int(rng.integers(1, 30)),
            )
        )
    s = summarize_records(records, "scop")
    fcps = [r.methods["scop"].fcp for r in records]
    assert s.fcr == float(np.mean(fcps))
    assert s.fcr_se == pytest.approx(np.std(fcps, ddof=1) / math.sqrt(len(fcps)))
    finite = [
        r.methods["scop"].avg_length
        for r in records
        if r.methods["scop"].avg_length is not None and not r.methods["scop"].infinite
    ]
    assert s.mean_length == pytest.approx(np.mean(finite))
    assert s.infinite_rep_count == sum(r.methods["scop"].infinite for r in records)
    assert s.mean_selected == pytest.approx(np.mean([r.n_selected for r in records]))


def test_infinite_lengths_are_excluded_not_propagated():
    records = [
        record(0, 0.0, 4.0),
        record(1, 0.5, math.inf, infinite=True),
        record(2, 0.0, 6.0),
    ]
    s = summarize_records(records, "scop")
    assert s.mean_length == pytest.approx(5.0)
    assert s.infinite_rep_count == 1
    # fcp from the infinite repetition still counts toward the rate
    assert s.fcr == pytest.approx(0.5 / 3.0)


def test_all_infinite_gives_absent_mean_length():
    records = [record(0, 0.0, math.inf, infinite=True), record(1, 0.0, math.inf, infinite=True)]
    s = summarize_records(records, "scop")
    assert s.mean_length is None
    assert s.infinite_rep_count == 2


def test_summarize_records_needs_records():
    with pytest.raises(ValueError):
        summarize_records([], "scop")


def test_summarize_recomputes_experiment_summaries():
    config = ExperimentConfig(
        scenario="B",
        rule=TCons(b0=-1.0),
        n_train=30,
        n_cal=30,
        m=30,
        methods=("scop", "ocp"),
        reps=25,
        seed=SEED,
    )
    result = run_experiment(config)
    assert summarize(result) == list(result.summaries)


# --------------------------------------------------------------------------
# compare


def test_compare_identical_summaries():
    a = summary()
    c = compare(a, a)
    assert c.fcr_gap == 0.0
    assert c.length_ratio == 1.0
    assert not c.significant


def test_compare_uses_strict_three_se_boundary():
    a = summary(fcr=0.13, fcr_se=0.006)
    b = summary(fcr=0.10, fcr_se=0.008)
    boundary = 3.0 * math.hypot(0.006, 0.008)
    assert abs(a.fcr - b.fcr) == pytest.approx(boundary)
    # exactly on the boundary: not significant (strict inequality)
    assert not compare(a, b).significant
    assert compare(summary(fcr=0.131, fcr_se=0.006), b).significant
    # a custom multiplier moves the boundary
    assert compare(a, b, se_multiplier=2.0).significant


def test_compare_handles_missing_pieces():
    no_se = summary(fcr_se=None, n_reps=1)
    assert not compare(no_se, summary()).significant
    no_length = summary(mean_length=None)
    assert compare(no_length, summary()).length_ratio is None
    zero_length = summary(mean_length=0.0)
    assert compare(summary(), zero_length).length_ratio is None
    c = compare(summary(fcr=0.2), summary(fcr=0.05))
    assert c.fcr_gap == pytest.approx(0.15)
    assert isinstance(c, Comparison)


def test_fcr_se_shrinks_with_square_root_of_reps():
    # quadrupling the repetition count should roughly halve the standard
    # error; check the ratio lands in a generous band around 2
    rng = np.random.default_rng(SEED + 1)
    fcps = rng.binomial(20, 0.1, size=1000) / 20.0
    small = summarize_records([record(i, float(f), 1.0) for i, f in enumerate(fcps[:250])], "scop")
    large = summarize_records([record(i, float(f), 1.0) for i, f in enumerate(fcps)], "scop")
    assert small.fcr_se is not None and large.fcr_se is not None
    ratio = small.fcr_se / large.fcr_se
    assert 1.6 < ratio < 2.4


def test_method_summary_validation():
    with pytest.raises(ValueError):
        summary(fcr=1.5)
    with pytest.raises(ValueError):
        summary(fcr_se=-0.1)
