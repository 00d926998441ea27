"""Training-split regression fits and unit scoring.

Two fits are supported for the prediction stage: ordinary least squares for
mean regression (absolute-residual scores) and linear quantile regression for
conformalized quantile regression (CQR). Quantile fits minimize the check
loss through iteratively reweighted least squares on a smoothed objective;
closeness to the true minimizer is good enough for conformal use because the
calibration step absorbs fit error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

#: smoothing floor for IRLS weights 1/max(|residual|, eps)
_IRLS_EPS = 1e-6
_IRLS_MAX_ITER = 200
_IRLS_TOL = 1e-8
_RIDGE_LAMBDA = 1e-8


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, d) with aligned responses (n,); all finite."""

    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2:
            raise ValueError(f"x must be 2-dimensional, got shape {x.shape}")
        if y.ndim != 1:
            raise ValueError(f"y must be 1-dimensional, got shape {y.shape}")
        if x.shape[0] != y.shape[0]:
            raise ValueError(f"x has {x.shape[0]} rows but y has {y.shape[0]}")
        if x.shape[0] == 0:
            raise ValueError("dataset must have at least one row")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset values must be finite")
        x = x.copy()
        y = y.copy()
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class LinearModel:
    """Affine predictor y-hat = intercept + x @ coef."""

    intercept: float
    coef: np.ndarray = field(repr=False)
    #: True when the design was rank-deficient and a ridge fallback was used
    regularized: bool = False
    #: False when an iterative fit stopped at the iteration cap
    converged: bool = True

    def __post_init__(self) -> None:
        coef = np.asarray(self.coef, dtype=float)
        if coef.ndim != 1:
            raise ValueError(f"coef must be 1-dimensional, got shape {coef.shape}")
        coef = coef.copy()
        coef.flags.writeable = False
        object.__setattr__(self, "coef", coef)

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.intercept + x @ self.coef


@dataclass(frozen=True)
class QuantilePair:
    """Lower and upper conditional-quantile fits at levels lo < hi."""

    lo_level: float
    hi_level: float
    lo: LinearModel
    hi: LinearModel

    def __post_init__(self) -> None:
        if not 0.0 < self.lo_level < self.hi_level < 1.0:
            raise ValueError(
                f"need 0 < lo_level < hi_level < 1, got {self.lo_level}, {self.hi_level}"
            )


class ScoredUnit(NamedTuple):
    """Per-unit view into a ScoredUnits batch."""

    index: int
    mu_hat: float
    t_score: float
    residual_score: float | None
    response: float | None


@dataclass(frozen=True)
class ScoredUnits:
    """Units with predictions and selection scores, column-oriented.

    ``residual_score`` and ``response`` are None for unlabeled (test) units;
    for labeled units residual_score[i] = |response[i] - mu_hat[i]|.
    """

    index: np.ndarray = field(repr=False)
    mu_hat: np.ndarray = field(repr=False)
    t_score: np.ndarray = field(repr=False)
    residual_score: np.ndarray | None = field(repr=False, default=None)
    response: np.ndarray | None = field(repr=False, default=None)

    def __post_init__(self) -> None:
        index = np.asarray(self.index, dtype=int)
        mu = np.asarray(self.mu_hat, dtype=float)
        t = np.asarray(self.t_score, dtype=float)
        n = index.size
        if mu.shape != (n,) or t.shape != (n,):
            raise ValueError("index, mu_hat, t_score must share one length")
        if (self.residual_score is None) != (self.response is None):
            raise ValueError("residual_score and response must be given together")
        arrays = {"index": index, "mu_hat": mu, "t_score": t}
        if self.response is not None:
            resid = np.asarray(self.residual_score, dtype=float)
            resp = np.asarray(self.response, dtype=float)
            if resid.shape != (n,) or resp.shape != (n,):
                raise ValueError("residual_score and response must match unit count")
            arrays["residual_score"] = resid
            arrays["response"] = resp
        for name, arr in arrays.items():
            if name != "index" and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.index.size

    def __getitem__(self, i: int) -> ScoredUnit:
        labeled = self.response is not None
        return ScoredUnit(
            index=int(self.index[i]),
            mu_hat=float(self.mu_hat[i]),
            t_score=float(self.t_score[i]),
            residual_score=float(self.residual_score[i]) if labeled else None,
            response=float(self.response[i]) if labeled else None,
        )


def _design(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.hstack([np.ones((x.shape[0], 1)), x])


def _solve_ls(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, bool]:
    """Least squares via lstsq; rank-deficient designs fall back to ridge."""
    beta, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank == a.shape[1]:
        return beta, False
    gram = a.T @ a + _RIDGE_LAMBDA * np.eye(a.shape[1])
    return np.linalg.solve(gram, a.T @ b), True


def fit_ols(data: Dataset) -> LinearModel:
    """Ordinary least squares with intercept."""
    a = _design(data.x)
    beta, regularized = _solve_ls(a, data.y)
    return LinearModel(intercept=float(beta[0]), coef=beta[1:], regularized=regularized)


def pinball_loss(level: float, y: np.ndarray, pred: np.ndarray) -> float:
    """Mean check loss at the given quantile level."""
    u = np.asarray(y, dtype=float) - np.asarray(pred, dtype=float)
    return float(np.mean(np.where(u >= 0.0, level * u, (level - 1.0) * u)))


def fit_quantile(data: Dataset, level: float) -> LinearModel:
    """Linear quantile regression at ``level`` via IRLS on smoothed check loss.

    Starts from the OLS solution and reweights with
    w_i = |level - 1{u_i < 0}| / max(|u_i|, 1e-6) until the largest
    coefficient change drops below 1e-8 or 200 iterations pass (the model is
    then flagged converged=False).
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    a = _design(data.x)
    beta, regularized = _solve_ls(a, data.y)
    converged = False
    for _ in range(_IRLS_MAX_ITER):
        u = data.y - a @ beta
        w = np.abs(level - (u < 0.0)) / np.maximum(np.abs(u), _IRLS_EPS)
        sw = np.sqrt(w)
        beta_new, reg_step = _solve_ls(a * sw[:, None], data.y * sw)
        regularized = regularized or reg_step
        delta = float(np.max(np.abs(beta_new - beta)))
        beta = beta_new
        if delta < _IRLS_TOL:
            converged = True
            break
    return LinearModel(
        intercept=float(beta[0]),
        coef=beta[1:],
        regularized=regularized,
        converged=converged,
    )


def score_units(
    model: LinearModel,
    x: np.ndarray,
    y: np.ndarray | None = None,
    b0: float | None = None,
) -> ScoredUnits:
    """Predict and score units; selection score is mu_hat, or mu_hat - b0.

    Labeled units (y given) carry absolute residuals |y - mu_hat|; unlabeled
    units carry none until evaluation supplies responses.
    """
    x = np.asarray(x, dtype=float)
    mu = model.predict(x)
    t = mu - b0 if b0 is not None else mu
    index = np.arange(x.shape[0])
    if y is None:
        return ScoredUnits(index=index, mu_hat=mu, t_score=t)
    y = np.asarray(y, dtype=float)
    return ScoredUnits(
        index=index,
        mu_hat=mu,
        t_score=t,
        residual_score=np.abs(y - mu),
        response=y,
    )


def cqr_score(pair: QuantilePair, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """CQR nonconformity max{q_lo(x) - y, y - q_hi(x)} per unit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.maximum(pair.lo.predict(x) - y, y - pair.hi.predict(x))
