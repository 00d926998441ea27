"""Deterministic property suite behind the ``selfcheck`` subcommand.

Every check here is an exact assertion against an independent brute-force
oracle or a finite-sample identity, evaluated on seeded inputs: the sample
quantile bounds, the drop-one-rank identities, the equivalence of p-value
ranking and score ranking for step-up selection, the exact minimum selection
size against a dense substitution grid, and the least-SSE split against
exhaustive enumeration. Each check reports one line; the suite passes only
if every instance of every check passes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .order_stats import SampleSet, conformal_quantile, drop_one_rank, kth_smallest
from .predictors import ScoredUnits
from .selection import (
    SelectionRule,
    TClu,
    TExch,
    TPos,
    bh_select,
    conformal_pvalues,
    m_min,
    optimal_split,
)

_SUITE_SEED = 0x5EED5EED


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _rng(tag: int) -> np.random.Generator:
    return np.random.default_rng((_SUITE_SEED + tag) & 0xFFFFFFFFFFFFFFFF)


def check_quantile_bounds() -> CheckResult:
    """Sample-quantile bounds: with q the ceil(n(1-alpha))-th smallest of a
    sample, the fraction strictly above q is at most alpha; for distinct
    values it is also at least alpha - 1/n."""
    rng = _rng(1)
    failures = 0
    trials = 0
    for n in range(1, 201):
        for values, distinct in (
            (rng.normal(size=n), True),
            (np.round(rng.normal(size=n), 1), False),
        ):
            alpha = float(rng.uniform(0.01, 0.99))
            k = math.ceil(n * (1.0 - alpha))
            if k < 1 or k > n:
                continue
            q = kth_smallest(SampleSet(values), k)
            frac_above = float(np.sum(values > q)) / n
            trials += 1
            if frac_above > alpha + 1e-12:
                failures += 1
            elif distinct and np.unique(values).size == n:
                if frac_above < alpha - 1.0 / n - 1e-12:
                    failures += 1
    return CheckResult(
        "quantile-bounds",
        failures == 0,
        f"{trials} (size, alpha) draws, sizes 1..200, {failures} violations",
    )


def check_conformal_quantile_monotone() -> CheckResult:
    """conformal_quantile is nonincreasing in alpha for a fixed sample."""
    rng = _rng(2)
    failures = 0
    for _ in range(200):
        sample = SampleSet(rng.normal(size=int(rng.integers(1, 60))))
        alphas = np.sort(rng.uniform(0.01, 0.99, size=8))
        quantiles = [conformal_quantile(sample, float(a)) for a in alphas]
        for lower, higher in zip(quantiles, quantiles[1:]):
            if higher > lower:
                failures += 1
    return CheckResult(
        "quantile-monotone", failures == 0, f"200 samples x 8 levels, {failures} inversions"
    )


def check_drop_one_rank() -> CheckResult:
    """drop_one_rank equals the remove-then-sort oracle, and the indicator
    identity {v <= x_(r)} == {v <= drop_one_rank(s, v, r)} holds for
    distinct samples."""
    rng = _rng(3)
    failures = 0
    trials = 0
    for _ in range(300):
        n = int(rng.integers(2, 40))
        if rng.random() < 0.5:
            values = rng.normal(size=n)
        else:
            values = np.round(rng.normal(size=n), 1)
        sample = SampleSet(values)
        sorted_vals = np.sort(values)
        for value in values:
            reduced = list(sorted_vals)
            reduced.remove(value)
            for r in range(1, n):
                trials += 1
                got = drop_one_rank(sample, float(value), r)
                if got != reduced[r - 1]:
                    failures += 1
                elif np.unique(values).size == n:
                    if (value <= sorted_vals[r - 1]) != (value <= got):
                        failures += 1
    return CheckResult(
        "drop-one-rank", failures == 0, f"{trials} (value, rank) cases, {failures} mismatches"
    )


def _random_scored_units(
    rng: np.random.Generator, n: int, with_response: bool
) -> ScoredUnits:
    scores = rng.normal(size=n)
    if with_response:
        response = rng.normal(loc=scores, scale=1.0)
        residual = np.abs(response - scores)
    else:
        response = None
        residual = None
    return ScoredUnits(
        index=np.arange(n),
        mu_hat=scores,
        t_score=scores,
        residual_score=residual,
        response=response,
    )


def check_pvalue_rank_duality() -> CheckResult:
    """Selecting test units by p-value rank equals selecting them by score
    rank at the same step-up count, on 1,000 random instances (n = m = 50)."""
    rng = _rng(4)
    failures = 0
    fired = 0
    for _ in range(1000):
        cal = _random_scored_units(rng, 50, with_response=True)
        test = _random_scored_units(rng, 50, with_response=False)
        b0 = float(np.quantile(cal.response, 0.3))
        beta = float(rng.uniform(0.1, 0.6))
        pv = conformal_pvalues(cal, test, b0)
        kappa = bh_select(pv, beta)
        if kappa == 0:
            score_set: set[int] = set()
            p_set: set[int] = set()
        else:
            fired += 1
            p_sorted = np.sort(pv.pvalues)
            p_set = set(np.nonzero(pv.pvalues <= p_sorted[kappa - 1])[0])
            t_sorted = np.sort(test.t_score)
            score_set = set(np.nonzero(test.t_score <= t_sorted[kappa - 1])[0])
        if p_set != score_set:
            failures += 1
    return CheckResult(
        "pvalue-rank-duality",
        failures == 0,
        f"1000 instances (n=m=50, {fired} nonempty), {failures} mismatches",
    )


def _size_oracle(
    rule: SelectionRule, cal: ScoredUnits, test: ScoredUnits, j: int
) -> Callable[[float], tuple[int, bool]]:
    """Per-substitution (selection size, j selected) computed straight from
    the rule's definition: re-pool, re-threshold, recount for every probe
    score. Deliberately naive; it shares no incremental logic with m_min."""
    others_test = np.sort(np.delete(test.t_score, j))
    pool_others = np.concatenate([cal.t_score, others_test])
    total = pool_others.size + 1

    def count(tau: float, t: float) -> tuple[int, bool]:
        selected_j = t <= tau
        size = int(np.searchsorted(others_test, tau, side="right")) + int(selected_j)
        return size, bool(selected_j)

    if isinstance(rule, TExch):
        rank = math.ceil(rule.q * total / 100.0)

        def texch(t: float) -> tuple[int, bool]:
            pooled = np.sort(np.append(pool_others, t))
            return count(float(pooled[rank - 1]), t)

        return texch
    if isinstance(rule, TClu):

        def tclu(t: float) -> tuple[int, bool]:
            split = optimal_split(np.append(pool_others, t))
            return count(split.tau_hat, t)

        return tclu
    if isinstance(rule, TPos):
        null_scores = np.sort(cal.t_score[cal.response >= rule.b0])
        n_cal = len(cal)
        m = len(test)
        other_scores = np.delete(test.t_score, j)

        def tpos(t: float) -> tuple[int, bool]:
            scores = np.append(other_scores, t)
            counts = np.searchsorted(null_scores, scores, side="right")
            kappa = bh_select((1.0 + counts) / (n_cal + 1.0), rule.beta)
            if kappa == 0:
                return 0, False
            return count(float(np.sort(scores)[kappa - 1]), t)

        return tpos
    raise TypeError(f"no oracle for rule: {rule!r}")


def _dense_grid(cal: ScoredUnits, test: ScoredUnits, j: int, points: int) -> np.ndarray:
    observed = np.concatenate([cal.t_score, np.delete(test.t_score, j)])
    lo = float(np.min(observed))
    hi = float(np.max(observed))
    span = hi - lo
    sentinel = lo - 1e6 * (span + 1.0)
    dense = np.linspace(lo - 0.5 * (span + 1.0), hi + 0.5 * (span + 1.0), points)
    return np.concatenate([[sentinel], dense, observed])


def check_m_min_oracle() -> CheckResult:
    """m_min equals brute-force minimization of the selection size over a
    dense substitution grid (10,000 points plus every observed score and a
    far-below sentinel), 200 random instances across the grid-searched
    rules."""
    rng = _rng(5)
    # the split-threshold rule re-runs the SSE split per probe (the split
    # itself is verified exhaustively below), so it gets a lighter grid
    plans: list[tuple[SelectionRule, int]] = [
        (TExch(q=40.0), 10_000),
        (TPos(b0=0.0, beta=0.3), 10_000),
        (TClu(), 2_500),
    ]
    failures = 0
    checked = 0
    for i in range(200):
        rule, points = plans[i % len(plans)]
        n = int(rng.integers(15, 35))
        m = int(rng.integers(15, 35))
        cal = _random_scored_units(rng, n, with_response=True)
        test = _random_scored_units(rng, m, with_response=False)
        j = int(rng.integers(0, m))
        got = m_min(rule, cal, test, j)
        size_fn = _size_oracle(rule, cal, test, j)
        best: int | None = None
        for t in _dense_grid(cal, test, j, points=points):
            size, selected_j = size_fn(float(t))
            if selected_j and (best is None or size < best):
                best = size
        checked += 1
        expected = 1 if best is None else best
        expect_flag = best is None
        if got.value != expected or got.never_selected != expect_flag:
            failures += 1
    return CheckResult(
        "m-min-dense-grid", failures == 0, f"{checked} instances, {failures} mismatches"
    )


def check_fisher_split_oracle() -> CheckResult:
    """optimal_split equals exhaustive enumeration of every candidate
    threshold's within-group SSE on 200 random instances (ties to the
    smallest threshold)."""
    rng = _rng(6)
    failures = 0
    for i in range(200):
        n = int(rng.integers(2, 60))
        if i % 3 == 0:
            centers = rng.choice([-3.0, 3.0], size=n)
            values = rng.normal(loc=centers, scale=0.5)
        elif i % 3 == 1:
            values = rng.normal(size=n)
        else:
            values = np.round(rng.normal(size=n), 1)
        got = optimal_split(values)
        uniq = np.unique(values)
        if uniq.size == 1:
            if got.tau_hat != uniq[0] or not got.degenerate:
                failures += 1
            continue
        best_tau = None
        best_sse = math.inf
        for tau in uniq[:-1]:
            lower = values[values <= tau]
            upper = values[values > tau]
            sse = float(np.sum((lower - lower.mean()) ** 2))
            if upper.size:
                sse += float(np.sum((upper - upper.mean()) ** 2))
            if sse < best_sse - 1e-12:
                best_sse = sse
                best_tau = float(tau)
        if got.degenerate or got.tau_hat != best_tau:
            failures += 1
    return CheckResult(
        "fisher-split-exhaustive", failures == 0, f"200 instances, {failures} mismatches"
    )


CHECKS: tuple[Callable[[], CheckResult], ...] = (
    check_quantile_bounds,
    check_conformal_quantile_monotone,
    check_drop_one_rank,
    check_pvalue_rank_duality,
    check_m_min_oracle,
    check_fisher_split_oracle,
)


def run_all(report: Callable[[CheckResult], None] | None = None) -> list[CheckResult]:
    results = []
    for check in CHECKS:
        result = check()
        if report is not None:
            report(result)
        results.append(result)
    return results
