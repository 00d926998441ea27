"""Cross-method summary statistics over experiment records.

The false coverage rate of a method is the plain mean of its per-repetition
false coverage proportions; its Monte Carlo standard error is the sample
standard deviation over sqrt(reps). Length averages skip repetitions whose
average is infinite or absent, with a counter reporting how many were
infinite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .simulate import ExperimentResult, RepRecord


@dataclass(frozen=True)
class MethodSummary:
    method: str
    fcr: float
    fcr_se: float | None
    mean_length: float | None
    infinite_rep_count: int
    mean_selected: float
    n_reps: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.fcr <= 1.0:
            raise ValueError(f"fcr must be in [0, 1], got {self.fcr}")
        if self.fcr_se is not None and self.fcr_se < 0.0:
            raise ValueError(f"fcr_se must be >= 0, got {self.fcr_se}")


@dataclass(frozen=True)
class Comparison:
    fcr_gap: float
    length_ratio: float | None
    significant: bool


def summarize_records(records: Sequence["RepRecord"], method: str) -> MethodSummary:
    """Aggregate one method's per-repetition records."""
    if not records:
        raise ValueError("need at least one successful repetition")
    fcps = np.array([r.methods[method].fcp for r in records])
    fcr = float(np.mean(fcps))
    fcr_se = float(np.std(fcps, ddof=1) / math.sqrt(fcps.size)) if fcps.size > 1 else None
    lengths = [
        r.methods[method].avg_length
        for r in records
        if r.methods[method].avg_length is not None and not r.methods[method].infinite
    ]
    mean_length = float(np.mean(lengths)) if lengths else None
    infinite = sum(1 for r in records if r.methods[method].infinite)
    mean_selected = float(np.mean([r.n_selected for r in records]))
    return MethodSummary(
        method=method,
        fcr=fcr,
        fcr_se=fcr_se,
        mean_length=mean_length,
        infinite_rep_count=infinite,
        mean_selected=mean_selected,
        n_reps=len(records),
    )


def summarize(result: "ExperimentResult") -> list[MethodSummary]:
    """Recompute every method's summary from the raw records."""
    return [summarize_records(result.records, method) for method in result.config.methods]


def compare(a: MethodSummary, b: MethodSummary, se_multiplier: float = 3.0) -> Comparison:
    """FCR gap a - b, mean-length ratio a/b, and whether the gap exceeds
    ``se_multiplier`` combined standard errors (strict inequality)."""
    gap = a.fcr - b.fcr
    if a.mean_length is not None and b.mean_length is not None and b.mean_length != 0.0:
        ratio = a.mean_length / b.mean_length
    else:
        ratio = None
    if a.fcr_se is None or b.fcr_se is None:
        significant = False
    else:
        significant = abs(gap) > se_multiplier * math.hypot(a.fcr_se, b.fcr_se)
    return Comparison(fcr_gap=gap, length_ratio=ratio, significant=significant)
