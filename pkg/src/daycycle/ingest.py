"""Day-level ingestion: CSV parsing, valid-day filtering, person aggregation,
and cohort descriptive statistics.

Day CSV schema (header exactly)::

    person_id,date,sit_min,stand_min,step_min,in_bed,out_bed,wear_min

``in_bed`` is the bedtime ending the day and ``out_bed`` the next morning's
rise time that closes it (a day runs out-of-bed to the next out-of-bed, so
its length need not be 24 hours).  Sleep is the in-bed interval; timestamps
are ISO-8601.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .cohort import BEHAVIOR_LABELS, COVARIATE_COLUMNS, CohortTable

DAY_CSV_HEADER = (
    "person_id", "date", "sit_min", "stand_min", "step_min",
    "in_bed", "out_bed", "wear_min",
)

MIN_WEAR_MINUTES = 600  # 10 or more hours of waking wear
MIN_VALID_DAYS = 4


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class DayRecord:
    person_id: str
    date: str
    sit_min: float
    stand_min: float
    step_min: float
    in_bed: datetime
    out_bed: datetime
    wear_min: float

    @property
    def sleep_min(self) -> float:
        return (self.out_bed - self.in_bed).total_seconds() / 60.0

    @property
    def total_min(self) -> float:
        return self.sit_min + self.stand_min + self.step_min + self.sleep_min

    @property
    def valid(self) -> bool:
        return self.wear_min >= MIN_WEAR_MINUTES


@dataclass(frozen=True)
class RowError:
    line: int
    message: str


def load_day_csv(path) -> tuple[list[DayRecord], list[RowError]]:
    """Parse day records; malformed rows go into the error report."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != DAY_CSV_HEADER:
            raise IngestError(
                f"bad header in {path}: expected {','.join(DAY_CSV_HEADER)}"
            )
        records: list[DayRecord] = []
        errors: list[RowError] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(DAY_CSV_HEADER):
                errors.append(RowError(lineno, "wrong field count"))
                continue
            try:
                records.append(_parse_row(row))
            except (ValueError, IngestError) as exc:
                errors.append(RowError(lineno, str(exc)))
    return records, errors


def _parse_row(row: list[str]) -> DayRecord:
    sit, stand, step, wear = (float(row[i]) for i in (2, 3, 4, 7))
    for name, v in (("sit_min", sit), ("stand_min", stand),
                    ("step_min", step), ("wear_min", wear)):
        if v < 0:
            raise IngestError(f"negative {name}")
    in_bed = datetime.fromisoformat(row[5])
    out_bed = datetime.fromisoformat(row[6])
    if out_bed <= in_bed:
        raise IngestError("out_bed must follow in_bed")
    return DayRecord(row[0], row[1], sit, stand, step, in_bed, out_bed, wear)


def write_day_csv(records: list[DayRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DAY_CSV_HEADER)
        for r in records:
            w.writerow([
                r.person_id, r.date,
                repr(r.sit_min), repr(r.stand_min), repr(r.step_min),
                r.in_bed.isoformat(), r.out_bed.isoformat(),
                repr(r.wear_min),
            ])


def validate_days(records: list[DayRecord]) -> dict[str, list[DayRecord]]:
    """Valid days (wear >= 600 min) grouped by person, keeping only persons
    with at least 4 valid days."""
    by_person: dict[str, list[DayRecord]] = {}
    for r in records:
        if r.valid:
            by_person.setdefault(r.person_id, []).append(r)
    return {pid: days for pid, days in by_person.items()
            if len(days) >= MIN_VALID_DAYS}


def aggregate_person(
    valid: dict[str, list[DayRecord]],
    covariate_table: dict[str, dict[str, float]],
) -> CohortTable:
    """Arithmetic means over valid days plus covariates and outcome.

    ``covariate_table`` maps person_id to a dict holding the numeric
    covariate columns plus ``casi_irt``; missing values may be NaN.
    """
    ids = sorted(valid)
    missing = [pid for pid in ids if pid not in covariate_table]
    if missing:
        raise IngestError(f"persons absent from covariate table: {missing[:5]}")
    n = len(ids)
    behaviors = np.zeros((n, 4))
    total = np.zeros(n)
    ndays = np.zeros(n, dtype=int)
    for i, pid in enumerate(ids):
        days = valid[pid]
        behaviors[i, 0] = np.mean([d.sit_min for d in days])
        behaviors[i, 1] = np.mean([d.stand_min for d in days])
        behaviors[i, 2] = np.mean([d.step_min for d in days])
        behaviors[i, 3] = np.mean([d.sleep_min for d in days])
        total[i] = np.mean([d.total_min for d in days])
        ndays[i] = len(days)
    covariates = {
        name: np.array([covariate_table[pid].get(name, math.nan) for pid in ids])
        for name in COVARIATE_COLUMNS
    }
    outcome = np.array([covariate_table[pid].get("casi_irt", math.nan)
                        for pid in ids])
    return CohortTable(ids, behaviors, total, covariates, outcome, ndays)


def describe(cohort: CohortTable) -> dict:
    """Descriptive summary: behavior hours/day mean (SD), total median [IQR],
    covariate means/counts, and outcome summary."""
    out: dict = {"n": cohort.n}
    behaviors = {}
    for j, lab in enumerate(BEHAVIOR_LABELS):
        hrs = cohort.behaviors[:, j] / 60.0
        behaviors[lab] = {
            "mean_h": round(float(hrs.mean()), 3),
            "sd_h": round(float(hrs.std(ddof=1)), 3) if cohort.n > 1 else None,
        }
    out["behaviors_hours_per_day"] = behaviors
    q25, q50, q75 = np.percentile(cohort.total, [25, 50, 75])
    out["total_min_median_iqr"] = [round(float(q50), 1),
                                   round(float(q25), 1), round(float(q75), 1)]
    cont = {}
    for name in ("education_years", "bmi", "cesd"):
        col = cohort.covariates[name]
        col = col[~np.isnan(col)]
        cont[name] = {
            "mean": round(float(col.mean()), 3) if col.size else None,
            "sd": round(float(col.std(ddof=1)), 3) if col.size > 1 else None,
        }
    cat = {}
    for name in ("age_75_84", "age_85p", "female", "nonwhite", "fair_poor_health"):
        col = cohort.covariates[name]
        known = col[~np.isnan(col)]
        count = int(np.nansum(col))
        cat[name] = {
            "n": count,
            "pct": round(100.0 * count / known.size, 1) if known.size else None,
        }
    out["continuous"] = cont
    out["categorical"] = cat
    y = cohort.outcome[~np.isnan(cohort.outcome)]
    out["outcome"] = {
        "mean": round(float(y.mean()), 3) if y.size else None,
        "sd": round(float(y.std(ddof=1)), 3) if y.size > 1 else None,
    }
    out["valid_days_min"] = int(cohort.valid_days.min())
    return out
