"""Shared linear-model machinery: OLS, sandwich covariance, Wald tests,
contrasts, natural cubic splines, GCV, and the James unequal-covariance test
of multivariate means."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

Z95 = stats.norm.ppf(0.975)


class RankDeficientError(ValueError):
    """Design matrix is not of full column rank (collinearity)."""


class LinmodError(ValueError):
    pass


@dataclass(frozen=True)
class DesignMatrix:
    values: np.ndarray
    labels: tuple[str, ...]
    has_intercept: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != len(self.labels):
            raise LinmodError("design shape does not match labels")
        if not np.isfinite(v).all():
            raise LinmodError("design contains non-finite entries")


@dataclass(frozen=True)
class FitResult:
    coef: np.ndarray
    cov_model: np.ndarray
    cov_robust: np.ndarray
    sigma2: float
    loglik: float
    n: int
    p: int
    labels: tuple[str, ...]
    residuals: np.ndarray
    fitted: np.ndarray

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LinmodError(f"no coefficient named {label!r}") from None

    def se(self, label: str, robust: bool = False) -> float:
        i = self.index(label)
        v = self.cov_robust if robust else self.cov_model
        return math.sqrt(v[i, i])


@dataclass(frozen=True)
class WaldTest:
    statistic: float
    df: int
    p_value: float


@dataclass(frozen=True)
class Estimate:
    estimate: float
    se: float
    ci_low: float
    ci_high: float


def fit_ols(X: DesignMatrix | np.ndarray, y: np.ndarray,
            labels: tuple[str, ...] | None = None,
            hc: str = "HC1") -> FitResult:
    """Ordinary least squares with both model-based and sandwich covariance.

    Raises RankDeficientError when the design is numerically rank deficient
    (e.g. all behaviors plus an intercept with constant total time).
    """
    if isinstance(X, DesignMatrix):
        labels = X.labels
        X = X.values
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if labels is None:
        labels = tuple(f"x{j}" for j in range(p))
    if n <= p:
        raise LinmodError(f"need N > p; got N={n}, p={p}")
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    cutoff = max(n, p) * np.finfo(float).eps * s[0]
    if s[-1] <= cutoff:
        raise RankDeficientError(
            "design matrix is rank deficient; drop a collinear column"
        )
    coef = vt.T @ ((u.T @ y) / s)
    fitted = X @ coef
    resid = y - fitted
    rss = float(resid @ resid)
    sigma2 = rss / (n - p)
    xtx_inv = vt.T @ np.diag(1.0 / s**2) @ vt
    cov_model = sigma2 * xtx_inv
    cov_robust = _sandwich(X, resid, xtx_inv, hc)
    # Gaussian MLE log-likelihood, for AIC-style comparisons.
    loglik = -0.5 * n * (math.log(2 * math.pi * rss / n) + 1.0)
    return FitResult(coef, cov_model, cov_robust, sigma2, loglik, n, p,
                     tuple(labels), resid, fitted)


def _sandwich(X: np.ndarray, resid: np.ndarray, xtx_inv: np.ndarray,
              hc: str) -> np.ndarray:
    n, p = X.shape
    meat = (X * resid[:, None] ** 2).T @ X
    cov = xtx_inv @ meat @ xtx_inv
    if hc == "HC1":
        cov = cov * (n / (n - p))
    elif hc != "HC0":
        raise LinmodError(f"unknown sandwich flavor {hc!r}")
    return cov


def wald_test(fit: FitResult, C: np.ndarray, use_robust: bool = True) -> WaldTest:
    """Chi-square Wald test of C @ beta = 0 on rank(C) degrees of freedom."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != fit.p:
        raise LinmodError("contrast width does not match coefficient count")
    if C.shape[0] > fit.p:
        raise LinmodError("more contrast rows than coefficients")
    if np.linalg.matrix_rank(C) < C.shape[0]:
        raise LinmodError("contrast matrix is not of full row rank")
    V = fit.cov_robust if use_robust else fit.cov_model
    cb = C @ fit.coef
    mid = C @ V @ C.T
    try:
        stat = float(cb @ np.linalg.solve(mid, cb))
    except np.linalg.LinAlgError:
        raise LinmodError("singular contrast covariance") from None
    df = C.shape[0]
    return WaldTest(stat, df, float(stats.chi2.sf(stat, df)))


def linear_combination(fit: FitResult, weights: np.ndarray,
                       use_robust: bool = False) -> Estimate:
    """Estimate and normal-based 95% CI for a linear combination of coefficients."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (fit.p,):
        raise LinmodError("weight length does not match coefficient count")
    V = fit.cov_robust if use_robust else fit.cov_model
    est = float(w @ fit.coef)
    se = math.sqrt(float(w @ V @ w))
    return Estimate(est, se, est - Z95 * se, est + Z95 * se)


def natural_cubic_spline_basis(x: np.ndarray, n_knots: int,
                               knots: np.ndarray | None = None) -> np.ndarray:
    """Natural cubic spline basis columns (intercept excluded).

    Knots default to ``n_knots`` equally spaced points over the observed
    range.  Returns n_knots - 1 columns, the first of which is ``x`` itself,
    so any linear function is reproduced exactly; second derivatives vanish
    beyond the boundary knots.
    """
    x = np.asarray(x, dtype=float)
    if knots is None:
        if n_knots < 2:
            raise LinmodError("need at least 2 knots")
        lo, hi = x.min(), x.max()
        if hi <= lo:
            raise LinmodError("cannot place knots on a constant variable")
        knots = np.linspace(lo, hi, n_knots)
    else:
        knots = np.asarray(knots, dtype=float)
        n_knots = len(knots)
    K = n_knots
    cols = [x]

    def d(k):
        num = np.maximum(x - knots[k], 0.0) ** 3 - np.maximum(x - knots[K - 1], 0.0) ** 3
        return num / (knots[K - 1] - knots[k])

    dlast = d(K - 2)
    for k in range(K - 2):
        cols.append(d(k) - dlast)
    return np.column_stack(cols)


def gcv_score(fit: FitResult, edf: float | None = None) -> float:
    """Generalized cross-validation: N * RSS / (N - edf)^2.

    For unpenalized fits the effective degrees of freedom equal p.
    """
    edf = fit.p if edf is None else edf
    if edf >= fit.n:
        raise LinmodError("effective degrees of freedom must be below N")
    rss = float(fit.residuals @ fit.residuals)
    return fit.n * rss / (fit.n - edf) ** 2


def james_test(groups: list[np.ndarray]) -> WaldTest:
    """James first-order test of equal mean vectors with unequal covariances.

    Each group is an n_i x p sample.  The statistic is the weighted sum of
    squared deviations of group means from their precision-weighted grand
    mean; the p-value applies James's chi-square correction.
    """
    if len(groups) < 2:
        raise LinmodError("need at least 2 groups")
    groups = [np.atleast_2d(np.asarray(g, dtype=float)) for g in groups]
    p = groups[0].shape[1]
    for g in groups:
        if g.shape[1] != p:
            raise LinmodError("groups must share a dimension")
        if g.shape[0] <= p:
            raise LinmodError("each group must have more rows than columns")
    g = len(groups)
    r = p * (g - 1)
    Ws, means = [], []
    for grp in groups:
        n_i = grp.shape[0]
        S = np.cov(grp, rowvar=False, ddof=1) / n_i
        S = np.atleast_2d(S)
        try:
            Ws.append(np.linalg.inv(S))
        except np.linalg.LinAlgError:
            raise LinmodError("degenerate within-group covariance") from None
        means.append(grp.mean(axis=0))
    W = np.sum(Ws, axis=0)
    Winv = np.linalg.inv(W)
    grand = Winv @ np.sum([Wi @ m for Wi, m in zip(Ws, means)], axis=0)
    J = float(np.sum([(m - grand) @ Wi @ (m - grand)
                      for Wi, m in zip(Ws, means)]))
    A = 1.0
    B = 0.0
    eye = np.eye(p)
    for grp, Wi in zip(groups, Ws):
        n_i = grp.shape[0]
        M = eye - Winv @ Wi
        t1 = np.trace(M) ** 2
        t2 = np.trace(M @ M)
        A += t1 / (2 * r * (n_i - 1))
        B += (t2 + 0.5 * t1) / (r * (r + 2) * (n_i - 1))
    # Solve c * (A + B c) = J for the equivalent uncorrected quantile.
    if J <= 0:
        return WaldTest(max(J, 0.0), r, 1.0)
    if B > 0:
        c = (-A + math.sqrt(A * A + 4 * B * J)) / (2 * B)
    else:
        c = J / A
    return WaldTest(J, r, float(stats.chi2.sf(c, r)))
