"""Order statistics and conformal quantiles on finite samples.

Everything downstream (interval widths, drop-one arguments, threshold picks)
reduces to ranks in a sorted sample, so the conventions live here in one
place: order statistics are 1-indexed, and the conformal quantile at level
``alpha`` is the ceil((1-alpha)(n+1))-th smallest value, +infinity when that
rank exceeds the sample size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SampleSet:
    """An immutable sample of finite real values, kept sorted ascending."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1:
            raise ValueError(f"sample must be 1-dimensional, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("sample values must be finite")
        arr = np.sort(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.size


def kth_smallest(sample: SampleSet, k: int) -> float:
    """k-th order statistic (1-indexed); ties count with multiplicity."""
    n = len(sample)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    return float(sample.values[k - 1])


def conformal_quantile(sample: SampleSet, alpha: float) -> float:
    """ceil((1-alpha)(n+1))-th smallest value; +inf when the rank exceeds n.

    With ``sample`` holding calibration residuals this is the half-width of a
    split conformal interval at miscoverage ``alpha``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    n = len(sample)
    k = math.ceil((1.0 - alpha) * (n + 1))
    if k > n:
        return math.inf
    return kth_smallest(sample, k)


def drop_one_rank(sample: SampleSet, value: float, r: int) -> float:
    """r-th smallest of the sample with one occurrence of ``value`` removed.

    ``value`` must be present. Implements the drop-one identity
    x^{-j}_(r) = x_(r) when x_j > x_(r), else x_(r+1), so no re-sort is
    needed; r ranges over [1, n-1].
    """
    n = len(sample)
    if n < 2:
        raise ValueError("need at least 2 values to drop one and take a rank")
    if not 1 <= r <= n - 1:
        raise ValueError(f"r must be in [1, {n - 1}], got {r}")
    vals = sample.values
    pos = int(np.searchsorted(vals, value))
    if pos >= n or vals[pos] != value:
        raise ValueError(f"value {value!r} not present in sample")
    if value > vals[r - 1]:
        return float(vals[r - 1])
    return float(vals[r])
