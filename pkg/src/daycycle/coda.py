"""Compositional outcome regression and time-reallocation effects.

The outcome is regressed on pivot-basis ilr coordinates of each person's
day composition (plus covariates).  Reallocation effects are read off the
fitted coefficients, either in closed form for the one-vs-remaining move or
constructively by contrasting two explicit compositions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import composition as comp
from .composition import Composition, SBPartition, ilr_array, pivot_basis
from .cohort import CohortTable
from .linmod import Estimate, FitResult, fit_ols, james_test, linear_combination


class CodaError(ValueError):
    pass


DEFAULT_DAY_MINUTES = 1440.0


@dataclass(frozen=True)
class CodaFit:
    fit: FitResult
    basis: SBPartition
    pivot: str
    baseline: Composition
    covariate_names: tuple[str, ...]
    coord_min: np.ndarray  # observed per-coordinate ilr ranges,
    coord_max: np.ndarray  # used as the extrapolation guard
    day_minutes: float = DEFAULT_DAY_MINUTES

    @property
    def n_coords(self) -> int:
        return self.basis.D - 1

    def coef_coords(self) -> np.ndarray:
        """The ilr-coordinate coefficients (positions 1..D-1 after intercept)."""
        return self.fit.coef[1:1 + self.n_coords]


def fit_coda(cohort: CohortTable, pivot: str, covariates: list[str],
             baseline: Composition | None = None,
             day_minutes: float = DEFAULT_DAY_MINUTES,
             zero_floor: float = 1.0) -> CodaFit:
    """OLS of the outcome on pivot-basis ilr coordinates plus covariates.

    The baseline composition for reallocation predictions defaults to the
    cohort compositional mean.
    """
    basis = pivot_basis(pivot, cohort.behavior_labels)
    parts = cohort.composition_array(zero_floor)
    Z = ilr_array(parts, basis)
    if baseline is None:
        baseline = comp.compositional_mean(cohort.compositions(zero_floor))
    elif baseline.labels != cohort.behavior_labels:
        raise CodaError("baseline labels do not match the cohort")
    cols = [np.ones(cohort.n)]
    labels = ["intercept"]
    for k in range(Z.shape[1]):
        cols.append(Z[:, k])
        labels.append(f"z{k + 1}")
    for c in covariates:
        cols.append(cohort.covariates[c])
        labels.append(c)
    fit = fit_ols(np.column_stack(cols), cohort.outcome, tuple(labels))
    return CodaFit(fit, basis, pivot, baseline, tuple(covariates),
                   Z.min(axis=0), Z.max(axis=0), day_minutes)


def one_vs_remaining_effect(cfit: CodaFit, r: float,
                            use_robust: bool = False) -> Estimate:
    """Closed-form effect of scaling the pivot behavior by (1 + r) while
    shrinking every other behavior by a common factor (1 - s).

    Only the pivot coordinate moves, by sqrt((D-1)/D) * ln((1+r)/(1-s)), so
    the effect and its CI come from the pivot coefficient alone.
    """
    x1 = cfit.baseline.part(cfit.pivot)
    upper = (1.0 - x1) / x1
    if not (-1.0 < r < upper):
        raise CodaError(f"r must lie in (-1, {upper:.4g}); got {r}")
    if r == 0:
        return Estimate(0.0, 0.0, 0.0, 0.0)
    s = r * x1 / (1.0 - x1)
    d = cfit.basis.D
    mult = math.sqrt((d - 1) / d) * math.log((1.0 + r) / (1.0 - s))
    w = np.zeros(cfit.fit.p)
    w[1] = mult  # pivot coordinate is z1
    return linear_combination(cfit.fit, w, use_robust=use_robust)


def proportional_reallocation_composition(cfit: CodaFit, r: float) -> Composition:
    """The baseline with the pivot part scaled by (1+r) and the remaining
    parts shrunk by the common factor that keeps the total at one."""
    x1 = cfit.baseline.part(cfit.pivot)
    s = r * x1 / (1.0 - x1)
    parts = cfit.baseline.array().copy()
    pidx = cfit.baseline.labels.index(cfit.pivot)
    parts *= (1.0 - s)
    parts[pidx] = x1 * (1.0 + r)
    return comp.closure_values(parts, cfit.baseline.labels)


@dataclass(frozen=True)
class ReallocationCurve:
    behavior: str
    mode: str  # "one-vs-remaining" or "pairwise"
    delta_minutes: np.ndarray
    estimate: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray


def reallocation_curve_proportional(cfit: CodaFit, behavior: str,
                                    deltas: np.ndarray,
                                    use_robust: bool = False) -> ReallocationCurve:
    """One-vs-remaining effect over a grid of signed minute reallocations."""
    if behavior != cfit.pivot:
        raise CodaError(
            f"fit pivot is {cfit.pivot!r}; refit with pivot={behavior!r}")
    base_min = cfit.baseline.part(behavior) * cfit.day_minutes
    deltas = np.asarray(deltas, dtype=float)
    est = np.empty(deltas.size)
    lo = np.empty(deltas.size)
    hi = np.empty(deltas.size)
    for i, d in enumerate(deltas):
        e = one_vs_remaining_effect(cfit, d / base_min, use_robust=use_robust)
        est[i], lo[i], hi[i] = e.estimate, e.ci_low, e.ci_high
    return ReallocationCurve(behavior, "one-vs-remaining", deltas, est, lo, hi)


def pairwise_reallocation(cfit: CodaFit, from_: str, to: str,
                          delta_minutes: float,
                          use_robust: bool = False) -> Estimate:
    """Effect of moving ``delta_minutes`` from one behavior to another,
    starting from the baseline composition."""
    if from_ == to:
        raise CodaError("source and destination behavior must differ")
    if delta_minutes == 0:
        return Estimate(0.0, 0.0, 0.0, 0.0)
    minutes = cfit.baseline.array() * cfit.day_minutes
    labels = cfit.baseline.labels
    i_from, i_to = labels.index(from_), labels.index(to)
    if delta_minutes >= minutes[i_from]:
        raise CodaError(
            f"cannot move {delta_minutes} min out of {from_!r} "
            f"({minutes[i_from]:.1f} min at baseline)")
    if -delta_minutes >= minutes[i_to]:
        raise CodaError(f"reverse move would drive {to!r} nonpositive")
    moved = minutes.copy()
    moved[i_from] -= delta_minutes
    moved[i_to] += delta_minutes
    perturbed = comp.closure_values(moved, labels)
    return composition_contrast(cfit, cfit.baseline, perturbed,
                                use_robust=use_robust)


def pairwise_reallocation_curve(cfit: CodaFit, from_: str, to: str,
                                deltas: np.ndarray,
                                use_robust: bool = False) -> ReallocationCurve:
    deltas = np.asarray(deltas, dtype=float)
    est = np.empty(deltas.size)
    lo = np.empty(deltas.size)
    hi = np.empty(deltas.size)
    for i, d in enumerate(deltas):
        e = pairwise_reallocation(cfit, from_, to, d, use_robust=use_robust)
        est[i], lo[i], hi[i] = e.estimate, e.ci_low, e.ci_high
    return ReallocationCurve(f"{from_}->{to}", "pairwise", deltas, est, lo, hi)


def composition_contrast(cfit: CodaFit, xa: Composition, xb: Composition,
                         use_robust: bool = False,
                         warn_extrapolation: bool = True) -> Estimate:
    """Predicted outcome difference between two compositions (xb minus xa),
    via the ilr-coordinate coefficients."""
    if xa.labels != cfit.basis.labels or xb.labels != cfit.basis.labels:
        raise CodaError("composition labels do not match the fitted basis")
    za = ilr_array(xa.array()[None, :], cfit.basis)[0]
    zb = ilr_array(xb.array()[None, :], cfit.basis)[0]
    if warn_extrapolation:
        for name, z in (("first", za), ("second", zb)):
            if np.any(z < cfit.coord_min) or np.any(z > cfit.coord_max):
                warnings.warn(
                    f"{name} composition lies outside the observed coordinate "
                    "range; the contrast extrapolates", stacklevel=2)
    w = np.zeros(cfit.fit.p)
    w[1:1 + cfit.n_coords] = zb - za
    return linear_combination(cfit.fit, w, use_robust=use_robust)


@dataclass(frozen=True)
class GroupMeansResult:
    group_means: dict[str, Composition]
    group_sizes: dict[str, int]
    statistic: float
    p_value: float


def compare_group_means(cohort: CohortTable, grouping: np.ndarray,
                        zero_floor: float = 1.0) -> GroupMeansResult:
    """Per-group compositional means plus the James test of equal means of
    the ilr-transformed data."""
    grouping = np.asarray(grouping)
    basis = pivot_basis(cohort.behavior_labels[0], cohort.behavior_labels)
    parts = cohort.composition_array(zero_floor)
    Z = ilr_array(parts, basis)
    comps = cohort.compositions(zero_floor)
    means: dict[str, Composition] = {}
    sizes: dict[str, int] = {}
    samples = []
    for g in np.unique(grouping):
        mask = grouping == g
        if mask.sum() < cohort.behaviors.shape[1]:
            raise CodaError(f"group {g!r} too small")
        means[str(g)] = comp.compositional_mean(
            [c for c, m in zip(comps, mask) if m])
        sizes[str(g)] = int(mask.sum())
        samples.append(Z[mask])
    test = james_test(samples)
    return GroupMeansResult(means, sizes, test.statistic, test.p_value)
