"""Selection rules: which test units get reported, and the matched
calibration subset that keeps coverage honest after selection.

A rule turns calibration and test scores into a threshold tau-hat; the
selected test units are those with score <= tau-hat, and the selected
calibration units (same comparison) calibrate the post-selection intervals.
The inflated calibration set (one rank past the realized selection) backs the
variant that stays valid for non-exchangeable thresholds.

Also here: conformal p-values with Benjamini-Hochberg step-up selection, the
least-SSE two-group split used by the clustering rule, and the exact minimum
selection-size computation that drives FCR-adjusted intervals.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .order_stats import SampleSet, kth_smallest
from .predictors import ScoredUnits

# --------------------------------------------------------------------------
# rule types and the CLI grammar


@dataclass(frozen=True)
class TCons:
    """Fixed threshold: tau-hat = b0."""

    b0: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.b0):
            raise ValueError(f"b0 must be finite, got {self.b0}")


@dataclass(frozen=True)
class TCal:
    """tau-hat = ceil(q*n/100)-th smallest calibration response."""

    q: float

    def __post_init__(self) -> None:
        _check_q(self.q)


@dataclass(frozen=True)
class TTest:
    """tau-hat = floor(q*m/100)-th smallest test score."""

    q: float

    def __post_init__(self) -> None:
        _check_q(self.q)


@dataclass(frozen=True)
class TExch:
    """tau-hat = ceil(q*(n+m)/100)-th smallest pooled score."""

    q: float

    def __post_init__(self) -> None:
        _check_q(self.q)


@dataclass(frozen=True)
class TTop:
    """tau-hat = K-th smallest test score."""

    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"K must be >= 1, got {self.k}")


@dataclass(frozen=True)
class TPos:
    """BH step-up at level beta on conformal p-values for H: response >= b0."""

    b0: float
    beta: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.b0):
            raise ValueError(f"b0 must be finite, got {self.b0}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"beta must be in (0, 1), got {self.beta}")


@dataclass(frozen=True)
class TClu:
    """tau-hat from the least-SSE two-group split of pooled scores."""


SelectionRule = TCons | TCal | TTest | TExch | TTop | TPos | TClu


def _check_q(q: float) -> None:
    if not (math.isfinite(q) and 0.0 < q <= 100.0):
        raise ValueError(f"q must be in (0, 100], got {q}")


_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_RULE_RES = {
    "t-cons": re.compile(rf"^t-cons:({_NUM})$"),
    "t-cal": re.compile(rf"^t-cal:({_NUM})$"),
    "t-test": re.compile(rf"^t-test:({_NUM})$"),
    "t-exch": re.compile(rf"^t-exch:({_NUM})$"),
    "t-top": re.compile(r"^t-top:(\d+)$"),
    "t-pos": re.compile(rf"^t-pos:({_NUM}),({_NUM})$"),
    "t-clu": re.compile(r"^t-clu$"),
}


def parse_rule(text: str) -> SelectionRule:
    """Parse the rule grammar: t-cons:B0 | t-cal:Q | t-test:Q | t-exch:Q |
    t-top:K | t-pos:B0,BETA | t-clu."""
    text = text.strip()
    name = text.split(":", 1)[0]
    pattern = _RULE_RES.get(name)
    if pattern is None:
        known = ", ".join(_RULE_RES)
        raise ValueError(f"unknown selection rule {text!r} (expected one of: {known})")
    match = pattern.match(text)
    if match is None:
        raise ValueError(f"malformed selection rule {text!r}")
    if name == "t-cons":
        return TCons(b0=float(match.group(1)))
    if name == "t-cal":
        return TCal(q=float(match.group(1)))
    if name == "t-test":
        return TTest(q=float(match.group(1)))
    if name == "t-exch":
        return TExch(q=float(match.group(1)))
    if name == "t-top":
        return TTop(k=int(match.group(1)))
    if name == "t-pos":
        return TPos(b0=float(match.group(1)), beta=float(match.group(2)))
    return TClu()


def format_rule(rule: SelectionRule) -> str:
    """Canonical grammar string for a rule (inverse of parse_rule)."""
    if isinstance(rule, TCons):
        return f"t-cons:{rule.b0:.17g}"
    if isinstance(rule, TCal):
        return f"t-cal:{rule.q:.17g}"
    if isinstance(rule, TTest):
        return f"t-test:{rule.q:.17g}"
    if isinstance(rule, TExch):
        return f"t-exch:{rule.q:.17g}"
    if isinstance(rule, TTop):
        return f"t-top:{rule.k}"
    if isinstance(rule, TPos):
        return f"t-pos:{rule.b0:.17g},{rule.beta:.17g}"
    if isinstance(rule, TClu):
        return "t-clu"
    raise TypeError(f"not a selection rule: {rule!r}")


# --------------------------------------------------------------------------
# conformal p-values and BH


@dataclass(frozen=True)
class ConformalPValues:
    """One p-value per test unit for H: response >= b0, plus null-set size."""

    pvalues: np.ndarray = field(repr=False)
    n_null: int = 0
    n_cal: int = 0

    def __post_init__(self) -> None:
        p = np.asarray(self.pvalues, dtype=float)
        if p.ndim != 1:
            raise ValueError("pvalues must be 1-dimensional")
        p = p.copy()
        p.flags.writeable = False
        object.__setattr__(self, "pvalues", p)


def conformal_pvalues(cal: ScoredUnits, test: ScoredUnits, b0: float) -> ConformalPValues:
    """p_j = (1 + #{null cal units with score <= T_j}) / (n_cal + 1).

    The null calibration set is the units with response >= b0; non-null
    calibration units behave as if their score were +infinity (they never
    contribute to the count) but still enlarge the denominator. This is the
    clipped-score construction: it keeps each p-value superuniform under its
    null while making small p-values reachable even when the null set is a
    modest fraction of the calibration set. When every calibration unit is
    null the two conventions coincide.
    """
    if cal.response is None:
        raise ValueError("calibration units must carry responses")
    if len(cal) == 0:
        raise ValueError("calibration set is empty")
    null_scores = np.sort(cal.t_score[cal.response >= b0])
    if null_scores.size == 0:
        raise ValueError("no null calibration units (every response is below b0)")
    counts = np.searchsorted(null_scores, test.t_score, side="right")
    p = (1.0 + counts) / (len(cal) + 1.0)
    return ConformalPValues(pvalues=p, n_null=int(null_scores.size), n_cal=len(cal))


def bh_select(
    pvalues: ConformalPValues | np.ndarray,
    beta: float,
    delta: Callable[[int], float] | None = None,
) -> int:
    """Step-up selection count: max{r : p_(r) <= delta(r)*beta/m}, 0 if none.

    delta defaults to the identity (Benjamini-Hochberg); any nondecreasing
    shape function may be supplied.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    p = pvalues.pvalues if isinstance(pvalues, ConformalPValues) else np.asarray(pvalues, dtype=float)
    m = p.size
    if m == 0:
        return 0
    sorted_p = np.sort(p)
    ranks = np.arange(1, m + 1)
    if delta is None:
        cutoffs = ranks * (beta / m)
    else:
        cutoffs = np.array([delta(int(r)) for r in ranks]) * (beta / m)
    hits = np.nonzero(sorted_p <= cutoffs)[0]
    return int(hits[-1] + 1) if hits.size else 0


# --------------------------------------------------------------------------
# least-SSE two-group split


class OptimalSplit(NamedTuple):
    tau_hat: float
    degenerate: bool


def optimal_split(values: np.ndarray) -> OptimalSplit:
    """Threshold of the best two-group split by within-group sum of squares.

    Candidates are the distinct values except the maximum; the lower group is
    {v <= candidate}. Ties in total SSE break toward the smallest threshold.
    All values equal is degenerate: that value is returned and the lower
    group is everything.
    """
    vals = np.sort(np.asarray(values, dtype=float))
    if vals.size < 2:
        raise ValueError(f"need at least 2 values to split, got {vals.size}")
    if not np.all(np.isfinite(vals)):
        raise ValueError("values must be finite")
    if vals[0] == vals[-1]:
        return OptimalSplit(tau_hat=float(vals[0]), degenerate=True)
    cum1 = np.cumsum(vals)
    cum2 = np.cumsum(vals * vals)
    total1 = cum1[-1]
    total2 = cum2[-1]
    n = vals.size
    # last position of each distinct value, excluding the maximum
    is_last = np.empty(n, dtype=bool)
    is_last[:-1] = vals[:-1] != vals[1:]
    is_last[-1] = False
    best_sse = math.inf
    best_tau = math.nan
    for k in np.nonzero(is_last)[0] + 1:  # k = size of the lower group
        sse_low = cum2[k - 1] - cum1[k - 1] ** 2 / k
        sum_hi = total1 - cum1[k - 1]
        sse_high = (total2 - cum2[k - 1]) - sum_hi**2 / (n - k)
        sse = sse_low + sse_high
        if sse < best_sse:
            best_sse = sse
            best_tau = float(vals[k - 1])
    return OptimalSplit(tau_hat=best_tau, degenerate=False)


# --------------------------------------------------------------------------
# rule application


@dataclass(frozen=True)
class SelectionOutcome:
    """Realized selection: threshold, selected test/calibration units, and
    the inflated calibration set for the conservative interval variant."""

    rule: SelectionRule
    tau_hat: float
    kappa_hat: int | None
    selected_test: np.ndarray = field(repr=False)
    selected_cal: np.ndarray = field(repr=False)
    selected_cal_plus: np.ndarray = field(repr=False)
    degenerate_split: bool = False

    def __post_init__(self) -> None:
        for name in ("selected_test", "selected_cal", "selected_cal_plus"):
            arr = np.asarray(getattr(self, name), dtype=int)
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_selected(self) -> int:
        return self.selected_test.size


def _threshold(rule: SelectionRule, cal: ScoredUnits, test: ScoredUnits) -> tuple[float, int | None, bool]:
    """(tau_hat, kappa_hat, degenerate_split) for the realized scores."""
    n = len(cal)
    m = len(test)
    if isinstance(rule, TCons):
        return rule.b0, None, False
    if isinstance(rule, TCal):
        if cal.response is None:
            raise ValueError("t-cal needs calibration responses")
        rank = math.ceil(rule.q * n / 100.0)
        return kth_smallest(SampleSet(cal.response), rank), None, False
    if isinstance(rule, TTest):
        kappa = math.floor(rule.q * m / 100.0)
        if kappa == 0:
            return -math.inf, 0, False
        return kth_smallest(SampleSet(test.t_score), kappa), kappa, False
    if isinstance(rule, TExch):
        pooled = SampleSet(np.concatenate([cal.t_score, test.t_score]))
        rank = math.ceil(rule.q * (n + m) / 100.0)
        return kth_smallest(pooled, rank), None, False
    if isinstance(rule, TTop):
        if rule.k > m:
            raise ValueError(f"t-top K={rule.k} exceeds the {m} test units")
        return kth_smallest(SampleSet(test.t_score), rule.k), rule.k, False
    if isinstance(rule, TPos):
        pv = conformal_pvalues(cal, test, rule.b0)
        kappa = bh_select(pv, rule.beta)
        if kappa == 0:
            return -math.inf, 0, False
        return kth_smallest(SampleSet(test.t_score), kappa), kappa, False
    if isinstance(rule, TClu):
        split = optimal_split(np.concatenate([cal.t_score, test.t_score]))
        return split.tau_hat, None, split.degenerate
    raise TypeError(f"not a selection rule: {rule!r}")


def _build_outcome(
    rule: SelectionRule,
    tau_hat: float,
    kappa_hat: int | None,
    cal_scores: np.ndarray,
    test_scores: np.ndarray,
    degenerate: bool,
) -> SelectionOutcome:
    """Selected sets plus the inflated calibration set from a threshold.

    The inflated set uses the rule's selection rank when it has one (t-test,
    t-top, t-pos) and otherwise the realized count of selected test units r,
    taking all calibration units with score at most the (r+1)-th smallest
    test score; r = m keeps the whole calibration set.
    """
    selected_test = np.nonzero(test_scores <= tau_hat)[0]
    selected_cal = np.nonzero(cal_scores <= tau_hat)[0]
    rank_plus = kappa_hat if kappa_hat is not None else selected_test.size
    if rank_plus >= test_scores.size:
        selected_cal_plus = np.arange(cal_scores.size)
    else:
        cutoff = kth_smallest(SampleSet(test_scores), rank_plus + 1)
        selected_cal_plus = np.nonzero(cal_scores <= cutoff)[0]
    return SelectionOutcome(
        rule=rule,
        tau_hat=tau_hat,
        kappa_hat=kappa_hat,
        selected_test=selected_test,
        selected_cal=selected_cal,
        selected_cal_plus=selected_cal_plus,
        degenerate_split=degenerate,
    )


def fisher_split(cal_scores: np.ndarray, test_scores: np.ndarray) -> SelectionOutcome:
    """Clustering selection: split pooled calibration + test scores into two
    groups by least within-group SSE; the lower group is selected."""
    cal_scores = np.asarray(cal_scores, dtype=float)
    test_scores = np.asarray(test_scores, dtype=float)
    split = optimal_split(np.concatenate([cal_scores, test_scores]))
    return _build_outcome(TClu(), split.tau_hat, None, cal_scores, test_scores, split.degenerate)


def apply_rule(rule: SelectionRule, cal: ScoredUnits, test: ScoredUnits) -> SelectionOutcome:
    """Run a selection rule against realized calibration and test scores."""
    tau_hat, kappa_hat, degenerate = _threshold(rule, cal, test)
    return _build_outcome(rule, tau_hat, kappa_hat, cal.t_score, test.t_score, degenerate)


# --------------------------------------------------------------------------
# minimum selection size for FCR-adjusted intervals


class MMinResult(NamedTuple):
    value: int
    never_selected: bool


def _texch_size(q: float, others_pooled: np.ndarray, others_test: np.ndarray, t: float) -> tuple[int, bool]:
    """(selection size, j selected) for pooled-quantile rule with score t at j."""
    total = others_pooled.size + 1
    rank = math.ceil(q * total / 100.0)
    pos = int(np.searchsorted(others_pooled, t, side="right"))
    # insert t into the sorted pool, then read off the rank-th smallest
    if pos >= rank:
        tau = others_pooled[rank - 1]
    elif pos == rank - 1:
        tau = t
    else:
        tau = others_pooled[rank - 2]
    selected_j = t <= tau
    size = int(np.searchsorted(others_test, tau, side="right")) + int(selected_j)
    return size, selected_j


def _tpos_size(
    rule: TPos,
    null_scores: np.ndarray,
    n_cal: int,
    other_pvalues: np.ndarray,
    m: int,
    t: float,
) -> tuple[int, bool]:
    """(selection size, j selected) when unit j's score is replaced by t."""
    p_j = (1.0 + int(np.searchsorted(null_scores, t, side="right"))) / (n_cal + 1.0)
    combined = np.sort(np.append(other_pvalues, p_j))
    cutoffs = np.arange(1, m + 1) * (rule.beta / m)
    hits = np.nonzero(combined <= cutoffs)[0]
    kappa = int(hits[-1] + 1) if hits.size else 0
    if kappa == 0:
        return 0, False
    return kappa, p_j <= combined[kappa - 1]


def _tclu_size(others_pooled: np.ndarray, others_test: np.ndarray, t: float) -> tuple[int, bool]:
    pos = int(np.searchsorted(others_pooled, t))
    pooled = np.insert(others_pooled, pos, t)
    split = optimal_split(pooled)
    selected_j = t <= split.tau_hat
    size = int(np.searchsorted(others_test, split.tau_hat, side="right")) + int(selected_j)
    return size, selected_j


def m_min(rule: SelectionRule, cal: ScoredUnits, test: ScoredUnits, j: int) -> MMinResult:
    """Smallest selection size, over all scores unit j could have had, among
    score vectors where j is still selected.

    Closed forms cover the fixed and rank-based rules. The remaining rules
    probe a candidate grid: a sentinel far below every observed score plus
    every observed calibration and test score except j's own (selection size
    is a right-continuous step function of j's score with breakpoints only at
    observed scores). A unit that no score can get selected yields value 1
    with the never_selected flag set.
    """
    m = len(test)
    if not 0 <= j < m:
        raise ValueError(f"j must index a test unit in [0, {m}), got {j}")
    others_test = np.sort(np.delete(test.t_score, j))
    if isinstance(rule, (TCons, TCal)):
        tau, _, _ = _threshold(rule, cal, test)
        return MMinResult(int(np.searchsorted(others_test, tau, side="right")) + 1, False)
    if isinstance(rule, TTest):
        kappa = math.floor(rule.q * m / 100.0)
        if kappa == 0:
            return MMinResult(1, True)
        return MMinResult(kappa, False)
    if isinstance(rule, TTop):
        if rule.k > m:
            raise ValueError(f"t-top K={rule.k} exceeds the {m} test units")
        return MMinResult(rule.k, False)

    observed = np.concatenate([cal.t_score, others_test])
    lo = float(np.min(observed))
    span = float(np.max(observed)) - lo
    sentinel = lo - 1e6 * (span + 1.0)
    grid = np.concatenate([[sentinel], np.unique(observed)])
    if isinstance(rule, TExch):
        others_pooled = np.sort(np.concatenate([cal.t_score, others_test]))
        size_fn = lambda t: _texch_size(rule.q, others_pooled, others_test, t)
    elif isinstance(rule, TPos):
        if cal.response is None:
            raise ValueError("t-pos needs calibration responses")
        null_scores = np.sort(cal.t_score[cal.response >= rule.b0])
        n_cal = len(cal)
        other_p = (
            1.0 + np.searchsorted(null_scores, np.delete(test.t_score, j), side="right")
        ) / (n_cal + 1.0)
        size_fn = lambda t: _tpos_size(rule, null_scores, n_cal, other_p, m, t)
    elif isinstance(rule, TClu):
        others_pooled = np.sort(np.concatenate([cal.t_score, others_test]))
        size_fn = lambda t: _tclu_size(others_pooled, others_test, t)
    else:
        raise TypeError(f"not a selection rule: {rule!r}")

    best: int | None = None
    for t in grid:
        size, selected_j = size_fn(float(t))
        if selected_j and (best is None or size < best):
            best = size
    if best is None:
        return MMinResult(1, True)
    return MMinResult(best, False)
