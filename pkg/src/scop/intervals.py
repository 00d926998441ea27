"""Prediction intervals for selected test units.

Four construction methods share one calibration mechanic (a conformal
quantile of nonconformity scores) but differ in which scores and level:

* ocp: all calibration scores at level alpha (ignores selection).
* acp: all calibration scores at per-unit level alpha * M_min_j / m.
* scop: scores of calibration units passing the selection threshold.
* scop_plus: scores of the inflated calibration set (one rank past the
  selection), the variant that stays exchangeable for ranking thresholds.

Each method works with absolute-residual scores (symmetric interval around
mu-hat) or CQR scores (band [q_lo - w, q_hi + w], w possibly negative).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .order_stats import SampleSet, conformal_quantile
from .predictors import Dataset, QuantilePair, ScoredUnits, cqr_score
from .selection import SelectionOutcome, SelectionRule, TCal, TCons, TTest, TTop, m_min

METHODS = ("scop", "scop_plus", "ocp", "acp")

ABS_RESIDUAL = "abs_residual"
CQR = "cqr"
SCORE_KINDS = (ABS_RESIDUAL, CQR)


class PredictionInterval(NamedTuple):
    """Per-unit view into an Intervals batch."""

    unit: int
    lo: float
    hi: float
    method: str
    score_kind: str


@dataclass(frozen=True)
class Intervals:
    """Intervals for the selected test units, one row per unit."""

    method: str
    score_kind: str
    unit: np.ndarray = field(repr=False)
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.score_kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.score_kind!r}")
        unit = np.asarray(self.unit, dtype=int).copy()
        lo = np.asarray(self.lo, dtype=float).copy()
        hi = np.asarray(self.hi, dtype=float).copy()
        if not (unit.shape == lo.shape == hi.shape) or unit.ndim != 1:
            raise ValueError("unit, lo, hi must be aligned 1-dimensional arrays")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValueError("interval endpoints must not be NaN")
        if np.any(lo > hi):
            raise ValueError("every interval needs lo <= hi")
        for name, arr in (("unit", unit), ("lo", lo), ("hi", hi)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.unit.size

    def __getitem__(self, i: int) -> PredictionInterval:
        return PredictionInterval(
            unit=int(self.unit[i]),
            lo=float(self.lo[i]),
            hi=float(self.hi[i]),
            method=self.method,
            score_kind=self.score_kind,
        )

    @property
    def lengths(self) -> np.ndarray:
        return self.hi - self.lo


class CoverageRecord(NamedTuple):
    """Per-repetition coverage evaluation of one method's intervals."""

    fcp: float
    avg_length: float | None
    infinite: bool
    n_selected: int


def _symmetric(method: str, units: np.ndarray, centers: np.ndarray, widths: np.ndarray) -> Intervals:
    return Intervals(
        method=method,
        score_kind=ABS_RESIDUAL,
        unit=units,
        lo=centers - widths,
        hi=centers + widths,
    )


def _band(method: str, units: np.ndarray, qlo: np.ndarray, qhi: np.ndarray, widths: np.ndarray) -> Intervals:
    lo = qlo - widths
    hi = qhi + widths
    # a negative adjustment can cross the endpoints; collapse to a point
    crossed = lo > hi
    if np.any(crossed):
        mid = 0.5 * (lo[crossed] + hi[crossed])
        lo[crossed] = mid
        hi[crossed] = mid
    return Intervals(method=method, score_kind=CQR, unit=units, lo=lo, hi=hi)


def _acp_alphas(
    rule: SelectionRule,
    cal: ScoredUnits,
    test: ScoredUnits,
    selected: SelectionOutcome,
    alpha: float,
    simple: bool,
) -> np.ndarray:
    """Per-selected-unit adjusted levels alpha * M_min_j / m."""
    m = len(test)
    sel = selected.selected_test
    if simple:
        m_vals = np.full(sel.size, max(sel.size, 1))
    elif isinstance(rule, (TCons, TCal)):
        # substituting any score <= tau-hat for a selected unit leaves the
        # rest of the selection unchanged, so M_min_j = |S_u-hat| for all j
        m_vals = np.full(sel.size, max(sel.size, 1))
    elif isinstance(rule, TTest):
        m_vals = np.full(sel.size, max(math.floor(rule.q * m / 100.0), 1))
    elif isinstance(rule, TTop):
        m_vals = np.full(sel.size, rule.k)
    else:
        m_vals = np.array([m_min(rule, cal, test, int(j)).value for j in sel])
    return alpha * m_vals / m


def _adjusted_widths(scores: SampleSet, alphas: np.ndarray) -> np.ndarray:
    return np.array([conformal_quantile(scores, float(a)) for a in alphas])


def ocp_intervals(
    cal: ScoredUnits, test: ScoredUnits, selected: SelectionOutcome, alpha: float
) -> Intervals:
    """Marginal split-conformal intervals: one width from all calibration
    residuals, applied to every selected unit."""
    w = conformal_quantile(SampleSet(cal.residual_score), alpha)
    sel = selected.selected_test
    return _symmetric("ocp", sel, test.mu_hat[sel], np.full(sel.size, w))


def acp_intervals(
    rule: SelectionRule,
    cal: ScoredUnits,
    test: ScoredUnits,
    selected: SelectionOutcome,
    alpha: float,
    simple: bool = False,
) -> Intervals:
    """FCR-adjusted intervals: unit j gets level alpha * M_min_j / m over the
    full calibration residuals. ``simple`` replaces M_min_j with the realized
    selection size (no guarantee for data-dependent rules, but cheap)."""
    alphas = _acp_alphas(rule, cal, test, selected, alpha, simple)
    widths = _adjusted_widths(SampleSet(cal.residual_score), alphas)
    sel = selected.selected_test
    return _symmetric("acp", sel, test.mu_hat[sel], widths)


def scop_intervals(
    cal: ScoredUnits,
    test: ScoredUnits,
    selected: SelectionOutcome,
    alpha: float,
    use_plus: bool = False,
) -> Intervals:
    """Selection-conditional intervals: one width from the residuals of the
    calibration units passing the same selection (inflated set when
    use_plus). An empty calibration subset degrades to infinite width."""
    idx = selected.selected_cal_plus if use_plus else selected.selected_cal
    w = conformal_quantile(SampleSet(cal.residual_score[idx]), alpha)
    sel = selected.selected_test
    method = "scop_plus" if use_plus else "scop"
    return _symmetric(method, sel, test.mu_hat[sel], np.full(sel.size, w))


def cqr_intervals(
    method: str,
    selected: SelectionOutcome,
    pair: QuantilePair,
    cal_data: Dataset,
    test_x: np.ndarray,
    alpha: float,
    rule: SelectionRule | None = None,
    cal: ScoredUnits | None = None,
    test: ScoredUnits | None = None,
    simple: bool = False,
) -> Intervals:
    """CQR-score intervals for any method. The adjustment w comes from the
    method's calibration subset of CQR scores; the band is
    [q_lo(x) - w, q_hi(x) + w] and w may be negative. The acp method needs
    rule/cal/test for the per-unit levels."""
    scores = cqr_score(pair, cal_data.x, cal_data.y)
    sel = selected.selected_test
    test_x = np.asarray(test_x, dtype=float)
    qlo = pair.lo.predict(test_x[sel])
    qhi = pair.hi.predict(test_x[sel])
    if method == "ocp":
        widths = np.full(sel.size, conformal_quantile(SampleSet(scores), alpha))
    elif method == "acp":
        if rule is None or cal is None or test is None:
            raise ValueError("acp needs rule, cal, and test units for M_min")
        alphas = _acp_alphas(rule, cal, test, selected, alpha, simple)
        widths = _adjusted_widths(SampleSet(scores), alphas)
    elif method in ("scop", "scop_plus"):
        idx = selected.selected_cal_plus if method == "scop_plus" else selected.selected_cal
        widths = np.full(sel.size, conformal_quantile(SampleSet(scores[idx]), alpha))
    else:
        raise ValueError(f"unknown method {method!r}")
    return _band(method, sel, qlo, qhi, widths)


def evaluate_coverage(intervals: Intervals, true_responses: np.ndarray) -> CoverageRecord:
    """False coverage proportion and average length against known responses.

    fcp uses the max(|selection|, 1) denominator, so an empty selection gives
    fcp 0 with the average length absent. Any infinite interval makes the
    repetition's average length infinite (reported via the flag).
    """
    y = np.asarray(true_responses, dtype=float)[intervals.unit]
    n = len(intervals)
    misses = int(np.sum((y < intervals.lo) | (y > intervals.hi)))
    fcp = misses / max(n, 1)
    if n == 0:
        return CoverageRecord(fcp=fcp, avg_length=None, infinite=False, n_selected=0)
    lengths = intervals.lengths
    if np.any(np.isinf(lengths)):
        return CoverageRecord(fcp=fcp, avg_length=math.inf, infinite=True, n_selected=n)
    return CoverageRecord(fcp=fcp, avg_length=float(np.mean(lengths)), infinite=False, n_selected=n)
