"""Command-line surface for the analysis pipelines.

Every subcommand is deterministic given (input bytes, flags, seed); outputs
are written atomically.  Exit codes: 0 success, 1 usage error, 2 data or
validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import coda, ingest, ism, lpa, plotting, simulate, step3
from .cohort import (
    BEHAVIOR_LABELS,
    COVARIATE_COLUMNS,
    CohortError,
    CohortTable,
    complete_case,
    load_cohort_csv,
    save_cohort_csv,
)
from .composition import CompositionError
from .ingest import IngestError
from .linmod import LinmodError, RankDeficientError
from .lpa import ConvergenceError, LpaError
from .simulate import SimulationError
from .step3 import Step3Error

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_ERRORS = (CohortError, IngestError, CompositionError, LpaError,
               SimulationError, Step3Error, coda.CodaError, ism.IsmError,
               LinmodError, FileNotFoundError)
NUMERIC_ERRORS = (RankDeficientError, ConvergenceError, np.linalg.LinAlgError,
                  FloatingPointError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _out_dir(args) -> str:
    return args.out or os.environ.get("DAYCYCLE_OUT", ".")


def _load(args) -> CohortTable:
    cohort = load_cohort_csv(args.input)
    covs = list(args.covariates)
    cohort, report = complete_case(cohort, covs)
    if cohort.n == 0:
        raise CohortError("no complete cases remain")
    return cohort


def _add_common(p, covariates=True):
    p.add_argument("input", help="person-level cohort CSV")
    p.add_argument("-o", "--out", default=None,
                   help="output directory (default $DAYCYCLE_OUT or .)")
    p.add_argument("--seed", type=int, default=0)
    if covariates:
        p.add_argument("--covariates", nargs="*", default=list(COVARIATE_COLUMNS))


def cmd_describe(args) -> int:
    cohort = load_cohort_csv(args.input)
    report = ingest.describe(cohort)
    out = os.path.join(_out_dir(args), "describe")
    if args.format in ("json", "both"):
        atomic_write(out + ".json", _json_text(report))
    if args.format in ("csv", "both"):
        rows = [["n", report["n"]]]
        for b, v in report["behaviors_hours_per_day"].items():
            rows.append([f"{b}_mean_h", v["mean_h"]])
            rows.append([f"{b}_sd_h", v["sd_h"]])
        med, lo, hi = report["total_min_median_iqr"]
        rows.append(["total_min_median", med])
        rows.append(["total_min_iqr", f"[{lo}, {hi}]"])
        for name, v in report["continuous"].items():
            rows.append([f"{name}_mean", v["mean"]])
            rows.append([f"{name}_sd", v["sd"]])
        for name, v in report["categorical"].items():
            rows.append([f"{name}_n", v["n"]])
            rows.append([f"{name}_pct", v["pct"]])
        rows.append(["outcome_mean", report["outcome"]["mean"]])
        rows.append(["outcome_sd", report["outcome"]["sd"]])
        atomic_write(out + ".csv", _csv_text(["field", "value"], rows))
    return EXIT_OK


def _table_payload(tab: ism.SubstitutionTable) -> dict:
    cells = {}
    for i, a in enumerate(tab.labels):
        for j, b in enumerate(tab.labels):
            if i == j:
                continue
            cells[f"{a}->{b}"] = {
                "estimate": tab.estimate[i, j],
                "ci_low": tab.ci_low[i, j],
                "ci_high": tab.ci_high[i, j],
            }
    return {"labels": list(tab.labels), "minutes": tab.minutes, "n": tab.n,
            "cells": cells}


def _table_csv(tab: ism.SubstitutionTable) -> str:
    rows = []
    for i, a in enumerate(tab.labels):
        for j, b in enumerate(tab.labels):
            if i == j:
                continue
            rows.append([a, b, repr(tab.estimate[i, j]),
                         repr(tab.ci_low[i, j]), repr(tab.ci_high[i, j])])
    return _csv_text(["from", "to", "estimate", "ci_low", "ci_high"], rows)


def cmd_ism(args) -> int:
    cohort = _load(args)
    out = _out_dir(args)
    tables = {"overall": ism.substitution_table(
        cohort, args.covariates, minutes=args.minutes)}
    if args.subgroup_step_cut is not None:
        cut = args.subgroup_step_cut
        step = cohort.behavior("step")
        tables[f"step_gt_{cut:g}"] = ism.substitution_table(
            cohort, args.covariates, minutes=args.minutes,
            subgroup=step > cut)
        tables[f"step_le_{cut:g}"] = ism.substitution_table(
            cohort, args.covariates, minutes=args.minutes,
            subgroup=step <= cut)
    payload = {name: _table_payload(t) for name, t in tables.items()}
    atomic_write(os.path.join(out, "ism_table.json"), _json_text(payload))
    for name, t in tables.items():
        atomic_write(os.path.join(out, f"ism_table_{name}.csv"), _table_csv(t))
    if args.flexible:
        flex = ism.fit_flexible_ism(cohort, args.covariates,
                                    dropped=args.dropped)
        rep = {
            "dropped": flex.dropped,
            "selected_knots": flex.n_knots,
            "gcv_by_knots": {str(k): v for k, v in flex.gcv_by_knots.items()},
            "behavior_wald_p": {b: t.p_value
                                for b, t in flex.behavior_tests.items()},
        }
        atomic_write(os.path.join(out, "ism_flexible.json"), _json_text(rep))
    return EXIT_OK


def _parse_grid(spec: str) -> np.ndarray:
    try:
        lo, hi, by = (float(v) for v in spec.split(":"))
    except ValueError:
        raise UsageError(f"bad --delta-grid {spec!r}; expected lo:hi:step")
    if by <= 0 or hi < lo:
        raise UsageError("delta grid needs lo <= hi and step > 0")
    return np.arange(lo, hi + by / 2, by)


def cmd_coda(args) -> int:
    cohort = _load(args)
    out = _out_dir(args)
    pivots = list(cohort.behavior_labels)
    table_rows = []
    for pv in pivots:
        cfit = coda.fit_coda(cohort, pv, args.covariates)
        est = cfit.fit.coef[1]
        se = cfit.fit.se("z1")
        from .linmod import Z95
        from scipy import stats as _st
        z = est / se if se > 0 else 0.0
        table_rows.append({
            "pivot": pv,
            "estimate": est,
            "ci_low": est - Z95 * se,
            "ci_high": est + Z95 * se,
            "p_value": float(2 * _st.norm.sf(abs(z))),
        })
    atomic_write(os.path.join(out, "coda_pivots.json"), _json_text(table_rows))
    atomic_write(os.path.join(out, "coda_pivots.csv"), _csv_text(
        ["pivot", "estimate", "ci_low", "ci_high", "p_value"],
        [[r["pivot"], repr(r["estimate"]), repr(r["ci_low"]),
          repr(r["ci_high"]), repr(r["p_value"])] for r in table_rows]))

    deltas = _parse_grid(args.delta_grid)
    cfit = coda.fit_coda(cohort, args.pivot, args.covariates)
    curve = coda.reallocation_curve_proportional(cfit, args.pivot, deltas)
    curve_rows = [[repr(d), repr(e), repr(lo), repr(hi)]
                  for d, e, lo, hi in zip(curve.delta_minutes, curve.estimate,
                                          curve.ci_low, curve.ci_high)]
    atomic_write(os.path.join(out, f"coda_curve_{args.pivot}.csv"),
                 _csv_text(["delta_min", "estimate", "ci_low", "ci_high"],
                           curve_rows))
    svg = plotting.curve_svg(curve.delta_minutes, curve.estimate,
                             curve.ci_low, curve.ci_high,
                             title=f"{args.pivot} vs remaining")
    atomic_write(os.path.join(out, f"coda_curve_{args.pivot}.svg"), svg)
    if args.pairwise:
        rows = []
        for other in pivots:
            if other == args.pivot:
                continue
            e = coda.pairwise_reallocation(cfit, other, args.pivot,
                                           args.pairwise_minutes)
            rows.append([other, args.pivot, repr(e.estimate),
                         repr(e.ci_low), repr(e.ci_high)])
        atomic_write(os.path.join(out, "coda_pairwise.csv"), _csv_text(
            ["from", "to", "estimate", "ci_low", "ci_high"], rows))
    return EXIT_OK


def _lpa_matrix(cohort: CohortTable, scale: str) -> tuple[np.ndarray, tuple[str, ...]]:
    """Indicator matrix for LPA: sit/stand/step, sleep dropped."""
    labels = ("sit", "stand", "step")
    cols = [cohort.behavior(b) for b in labels]
    mat = np.column_stack(cols)
    if scale == "proportion":
        mat = mat / cohort.total[:, None]
    elif scale == "hours":
        mat = mat / 60.0
    else:
        raise UsageError(f"unknown scale {scale!r}")
    return mat, labels


def cmd_lpa(args) -> int:
    cohort = load_cohort_csv(args.input)
    out = _out_dir(args)
    data, labels = _lpa_matrix(cohort, args.scale)
    try:
        lo, hi = (int(v) for v in args.classes.split(":"))
    except ValueError:
        raise UsageError(f"bad --classes {args.classes!r}; expected lo:hi")
    rows, models = lpa.selection_table(
        data, range(lo, hi + 1), structure=args.covariance,
        starts=args.starts, max_iter=args.max_iter, seed=args.seed,
        labels=labels, run_blrt=args.blrt, n_boot=args.blrt_boot,
        starts_boot=args.blrt_starts)
    table = []
    for r in rows:
        table.append({
            "K": r.K, "loglik": r.loglik,
            "AIC": r.stats.aic, "BIC": r.stats.bic, "CAIC": r.stats.caic,
            "SABIC": r.stats.sabic, "ICL_BIC": r.stats.icl_bic,
            "entropy": r.stats.entropy,
            "n_min": r.n_min, "n_min_pct": r.n_min_pct,
            "n_replicated": r.n_replicated, "blrt_p": r.blrt_p,
        })
    atomic_write(os.path.join(out, "lpa_selection.json"), _json_text(table))
    atomic_write(os.path.join(out, "lpa_selection.csv"), _csv_text(
        ["K", "loglik", "AIC", "BIC", "CAIC", "SABIC", "ICL_BIC",
         "entropy", "n_min", "n_min_pct", "n_replicated", "blrt_p"],
        [[t["K"], repr(t["loglik"]), repr(t["AIC"]), repr(t["BIC"]),
          repr(t["CAIC"]), repr(t["SABIC"]), repr(t["ICL_BIC"]),
          repr(t["entropy"]), t["n_min"], t["n_min_pct"],
          t["n_replicated"],
          "" if t["blrt_p"] is None else repr(t["blrt_p"])] for t in table]))
    best_k = min(table, key=lambda t: t["BIC"])["K"]
    model, post = models[best_k]
    atomic_write(os.path.join(out, "lpa_model.json"), model.to_json())
    assign = lpa.modal_assignment(post)
    D = lpa.classification_error_matrix(post, assign)
    atomic_write(os.path.join(out, "lpa_error_matrix.json"),
                 _json_text({"selected_K": best_k, "D": D.tolist()}))
    sleep_stats = lpa.derived_sleep_stats(model)
    profile = {
        "selected_K": best_k,
        "weights": model.weights.tolist(),
        "means": model.means.tolist(),
        "covs": model.covs.tolist(),
        "indicator_labels": list(model.labels),
        "derived_remainder": sleep_stats,
    }
    atomic_write(os.path.join(out, "lpa_profiles.json"), _json_text(profile))
    return EXIT_OK


def cmd_step3(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        model = lpa.MixtureModel.from_json(fh.read())
    cohort = load_cohort_csv(args.input)
    cohort, _ = complete_case(cohort, list(args.covariates))
    data, _ = _lpa_matrix(cohort, args.scale)
    post = lpa.posterior(model, data)
    assign = lpa.modal_assignment(post)
    covs = cohort.covariate_matrix(list(args.covariates)) \
        if args.covariates else None
    results = {}
    for method in ("naive", args.method):
        if method == "ml":
            continue
        res = step3.step3_distal(post, assign, cohort.outcome, covs,
                                 method=method)
        results[method] = {
            "reference": res.reference,
            "classes": list(res.classes),
            "coef": res.coef.tolist(),
            "robust_se": res.robust_se.tolist(),
            "labels": list(res.labels),
            "overall_wald": {"statistic": res.overall.statistic,
                             "df": res.overall.df,
                             "p_value": res.overall.p_value},
        }
    out = _out_dir(args)
    atomic_write(os.path.join(out, "step3_report.json"), _json_text(results))
    rows = []
    ref = results["naive"]["reference"]
    for i, k in enumerate(results["naive"]["classes"]):
        row = [f"class_{k}_vs_{ref}"]
        for method in results:
            row += [repr(results[method]["coef"][i]),
                    repr(results[method]["robust_se"][i])]
        rows.append(row)
    header = ["contrast"]
    for method in results:
        header += [f"{method}_estimate", f"{method}_robust_se"]
    atomic_write(os.path.join(out, "step3_report.csv"),
                 _csv_text(header, rows))
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            spec = simulate.SimSpec.from_json(fh.read())
    else:
        spec = simulate.default_sim_spec()
    result = simulate.simulate_cohort(spec, args.n, seed=args.seed)
    save_cohort_csv(result.cohort, args.output)
    return EXIT_OK


def cmd_plot(args) -> int:
    out = _out_dir(args)
    cohort = load_cohort_csv(args.input)
    if args.kind == "ternary":
        labels = tuple(args.behaviors)
        if len(labels) != 3:
            raise UsageError("--behaviors needs exactly 3 labels")
        comps = [c.subcomposition(labels) for c in cohort.compositions()]
        svg = plotting.ternary_svg(comps, cohort.outcome,
                                   title="-".join(labels))
        atomic_write(os.path.join(out, "ternary.svg"), svg)
    elif args.kind == "realloc":
        cfit = coda.fit_coda(cohort, args.pivot, list(COVARIATE_COLUMNS))
        deltas = _parse_grid(args.delta_grid)
        curve = coda.reallocation_curve_proportional(cfit, args.pivot, deltas)
        svg = plotting.curve_svg(curve.delta_minutes, curve.estimate,
                                 curve.ci_low, curve.ci_high,
                                 title=f"{args.pivot} vs remaining")
        atomic_write(os.path.join(out, f"realloc_{args.pivot}.svg"), svg)
    elif args.kind == "profiles":
        if not args.model:
            raise UsageError("--kind profiles requires --model")
        with open(args.model, encoding="utf-8") as fh:
            model = lpa.MixtureModel.from_json(fh.read())
        data, _ = _lpa_matrix(cohort, args.scale)
        post = lpa.posterior(model, data)
        assign = lpa.modal_assignment(post)
        groups = {}
        # model classes are already ordered by mean sitting time
        for k in range(model.K):
            mask = assign == k
            if not mask.any():
                continue
            groups[f"profile_{k + 1}"] = {
                b: cohort.behavior(b)[mask] / 60.0 for b in BEHAVIOR_LABELS}
        svg = plotting.profile_boxplot_svg(groups, title="24HAC profiles")
        atomic_write(os.path.join(out, "profiles.svg"), svg)
    else:
        raise UsageError(f"unknown plot kind {args.kind!r}")
    return EXIT_OK


def build_parser() -> _Parser:
    p = _Parser(prog="daycycle",
                description="24-hour activity-cycle analysis pipelines")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("describe", help="cohort descriptive report")
    _add_common(d, covariates=False)
    d.add_argument("--format", choices=("json", "csv", "both"), default="both")
    d.set_defaults(func=cmd_describe)

    i = sub.add_parser("ism", help="isotemporal substitution tables")
    _add_common(i)
    i.add_argument("--minutes", type=float, default=30.0)
    i.add_argument("--subgroup-step-cut", type=float, default=None,
                   help="split on mean step minutes/day (e.g. 60)")
    i.add_argument("--flexible", action="store_true",
                   help="also fit the spline ISM with GCV knot selection")
    i.add_argument("--dropped", default="step",
                   help="behavior dropped in the flexible model")
    i.set_defaults(func=cmd_ism)

    c = sub.add_parser("coda", help="compositional regression outputs")
    _add_common(c)
    c.add_argument("--pivot", default="step", choices=BEHAVIOR_LABELS)
    c.add_argument("--delta-grid", default="-30:30:5")
    c.add_argument("--pairwise", action="store_true")
    c.add_argument("--pairwise-minutes", type=float, default=30.0)
    c.set_defaults(func=cmd_coda)

    l = sub.add_parser("lpa", help="latent profile selection and artifacts")
    _add_common(l, covariates=False)
    l.add_argument("--classes", default="2:6", help="K range lo:hi")
    l.add_argument("--starts", type=int, default=160)
    l.add_argument("--max-iter", type=int, default=250)
    l.add_argument("--covariance", default="free-var-free-cov",
                   choices=lpa.STRUCTURES)
    l.add_argument("--scale", default="proportion",
                   choices=("proportion", "hours"))
    l.add_argument("--blrt", action="store_true")
    l.add_argument("--blrt-boot", type=int, default=100)
    l.add_argument("--blrt-starts", type=int, default=10)
    l.set_defaults(func=cmd_lpa)

    s = sub.add_parser("step3", help="profile-outcome association report")
    s.add_argument("model", help="mixture model artifact (JSON)")
    _add_common(s)
    s.add_argument("--method", choices=("bch", "naive"), default="bch")
    s.add_argument("--scale", default="proportion",
                   choices=("proportion", "hours"))
    s.set_defaults(func=cmd_step3)

    m = sub.add_parser("simulate", help="generate a synthetic cohort CSV")
    m.add_argument("--spec", default=None, help="generator spec JSON")
    m.add_argument("--n", type=int, default=1000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("-o", "--output", default="cohort.csv")
    m.set_defaults(func=cmd_simulate)

    g = sub.add_parser("plot", help="SVG figures")
    _add_common(g, covariates=False)
    g.add_argument("--kind", choices=("ternary", "realloc", "profiles"),
                   required=True)
    g.add_argument("--behaviors", nargs="*", default=["sit", "stand", "step"])
    g.add_argument("--pivot", default="step", choices=BEHAVIOR_LABELS)
    g.add_argument("--delta-grid", default="-30:30:5")
    g.add_argument("--model", default=None)
    g.add_argument("--scale", default="proportion",
                   choices=("proportion", "hours"))
    g.set_defaults(func=cmd_plot)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
