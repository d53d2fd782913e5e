"""Person-level cohort table: behavior-time means, covariates, and outcome.

This is the common input to the substitution, compositional, and latent
profile analyses.  Behavior times are minutes/day averaged over a person's
valid wear days; covariates are numerically coded (dummies for categories);
missing covariates are NaN until a complete-case filter is applied.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .composition import (
    Composition,
    RawTimeVector,
    closure,
    replace_zeros,
)

BEHAVIOR_LABELS = ("sit", "stand", "step", "sleep")

COVARIATE_COLUMNS = (
    "age_75_84",
    "age_85p",
    "female",
    "nonwhite",
    "education_years",
    "bmi",
    "cesd",
    "fair_poor_health",
)

CSV_HEADER = (
    ("person_id",)
    + tuple(f"{b}_min" for b in BEHAVIOR_LABELS)
    + ("total_min", "valid_days")
    + COVARIATE_COLUMNS
    + ("casi_irt",)
)


class CohortError(ValueError):
    pass


@dataclass
class CohortTable:
    ids: list[str]
    behaviors: np.ndarray  # N x D minutes/day
    total: np.ndarray  # N mean day length, minutes
    covariates: dict[str, np.ndarray]
    outcome: np.ndarray
    valid_days: np.ndarray
    behavior_labels: tuple[str, ...] = BEHAVIOR_LABELS
    _compositions: list[Composition] | None = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.ids)
        if len(set(self.ids)) != n:
            raise CohortError("duplicate person ids")
        if self.behaviors.shape != (n, len(self.behavior_labels)):
            raise CohortError("behavior matrix shape mismatch")
        for name, col in self.covariates.items():
            if col.shape != (n,):
                raise CohortError(f"covariate {name!r} has wrong length")
        if self.outcome.shape != (n,) or self.total.shape != (n,):
            raise CohortError("outcome/total length mismatch")

    @property
    def n(self) -> int:
        return len(self.ids)

    def behavior(self, label: str) -> np.ndarray:
        return self.behaviors[:, self.behavior_labels.index(label)]

    def covariate_matrix(self, names: list[str]) -> np.ndarray:
        cols = []
        for name in names:
            if name not in self.covariates:
                raise CohortError(f"unknown covariate {name!r}")
            cols.append(self.covariates[name])
        return np.column_stack(cols) if cols else np.empty((self.n, 0))

    def compositions(self, zero_floor: float = 1.0) -> list[Composition]:
        """Per-person closed compositions, with zeros floored first."""
        if self._compositions is None:
            out = []
            for row in self.behaviors:
                raw = RawTimeVector(tuple(row), self.behavior_labels)
                if any(m == 0 for m in raw.minutes):
                    raw = replace_zeros(raw, "fixed-floor", floor=zero_floor)
                out.append(closure(raw))
            self._compositions = out
        return self._compositions

    def composition_array(self, zero_floor: float = 1.0) -> np.ndarray:
        return np.array([c.parts for c in self.compositions(zero_floor)])

    def subset(self, mask: np.ndarray) -> "CohortTable":
        idx = np.flatnonzero(mask)
        return CohortTable(
            ids=[self.ids[i] for i in idx],
            behaviors=self.behaviors[idx],
            total=self.total[idx],
            covariates={k: v[idx] for k, v in self.covariates.items()},
            outcome=self.outcome[idx],
            valid_days=self.valid_days[idx],
            behavior_labels=self.behavior_labels,
        )


def complete_case(cohort: CohortTable, required: list[str]) -> tuple[CohortTable, dict]:
    """Drop persons with any missing required covariate; report what was dropped."""
    bad_fields: dict[str, int] = {}
    keep = np.ones(cohort.n, dtype=bool)
    for name in required:
        col = cohort.covariates[name]
        miss = np.isnan(col)
        if miss.any():
            bad_fields[name] = int(miss.sum())
            keep &= ~miss
    miss_out = np.isnan(cohort.outcome)
    if miss_out.any():
        bad_fields["casi_irt"] = int(miss_out.sum())
        keep &= ~miss_out
    n_drop = int((~keep).sum())
    report = {
        "excluded": n_drop,
        "excluded_pct": round(100.0 * n_drop / cohort.n, 1) if cohort.n else 0.0,
        "fields": bad_fields,
    }
    return cohort.subset(keep), report


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return repr(float(x))


def save_cohort_csv(cohort: CohortTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(cohort.n):
            row = [cohort.ids[i]]
            row += [_fmt(v) for v in cohort.behaviors[i]]
            row.append(_fmt(cohort.total[i]))
            row.append(str(int(cohort.valid_days[i])))
            row += [_fmt(cohort.covariates[c][i]) for c in COVARIATE_COLUMNS]
            row.append(_fmt(cohort.outcome[i]))
            w.writerow(row)


def load_cohort_csv(path) -> CohortTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_HEADER:
            raise CohortError(f"unexpected cohort header in {path}")
        rows = list(reader)
    if not rows:
        raise CohortError("empty cohort file")

    def parse(s: str) -> float:
        return float(s) if s != "" else math.nan

    ids = [r[0] for r in rows]
    d = len(BEHAVIOR_LABELS)
    behaviors = np.array([[parse(v) for v in r[1:1 + d]] for r in rows])
    total = np.array([parse(r[1 + d]) for r in rows])
    valid_days = np.array([int(r[2 + d]) for r in rows])
    cov_start = 3 + d
    covariates = {
        name: np.array([parse(r[cov_start + j]) for r in rows])
        for j, name in enumerate(COVARIATE_COLUMNS)
    }
    outcome = np.array([parse(r[-1]) for r in rows])
    return CohortTable(ids, behaviors, total, covariates, outcome, valid_days)
