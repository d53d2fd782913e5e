"""Acceptance suite: one test per release criterion.

Each test prints a single PASS line when its assertions hold (run with
``pytest -v`` to get one line per criterion either way).
"""

import json
import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from scipy.special import logsumexp

from daycycle.cli import main as cli_main
from daycycle.coda import (
    composition_contrast,
    fit_coda,
    one_vs_remaining_effect,
    proportional_reallocation_composition,
)
from daycycle.composition import (
    CANONICAL_LABELS,
    Composition,
    SBPartition,
    aitchison_distance,
    closure_values,
    ilr,
    ilr_array,
    ilr_inverse,
    inverse,
    perturb,
    pivot_basis,
    power,
    uniform,
)
from daycycle.ingest import (
    MIN_VALID_DAYS,
    MIN_WEAR_MINUTES,
    DayRecord,
    load_day_csv,
    validate_days,
    write_day_csv,
)
from daycycle.linmod import fit_ols, linear_combination
from daycycle.lpa import (
    MixtureModel,
    _log_resp,
    _mstep,
    blrt,
    derived_sleep_stats,
    fit_mixture,
    fit_stats,
)
from daycycle.step3 import step3_distal

from conftest import make_cohort


def _ok(num, message):
    print(f"[criterion {num:02d}] PASS: {message}")


def test_criterion_01_fit_statistic_fixture():
    """AIC/BIC/CAIC/SABIC reproduce the published 2-class row within 0.2;
    ICL-BIC reconciles with the entropy statistic 0.50 within 10."""
    model = MixtureModel(
        weights=np.array([0.5, 0.5]), means=np.zeros((2, 3)),
        covs=np.array([np.eye(3)] * 2), structure="free-var-free-cov",
        loglik=5595.1, n=1034, labels=("sit", "stand", "step"))
    assert model.n_params == 19
    hard = np.tile([1.0 - 1e-12, 1e-12], (1034, 1))
    st = fit_stats(model, hard)
    assert st.aic == pytest.approx(-11152.3, abs=0.2)
    assert st.bic == pytest.approx(-11058.4, abs=0.2)
    assert st.caic == pytest.approx(-11039.4, abs=0.2)
    assert st.sabic == pytest.approx(-11118.8, abs=0.2)
    # entropy statistic 0.50 implies total entropy (1 - 0.50) * N * ln 2
    icl = st.bic + 2 * (1 - 0.50) * 1034 * math.log(2)
    assert icl == pytest.approx(-10337.8, abs=10)
    _ok(1, "information criteria within 0.2; ICL-BIC within 10")


def test_criterion_02_ilr_reference_fixtures():
    """The two documented reference compositions and their contrast weights
    under the step-pivot basis, within 0.03 per coordinate."""
    basis = pivot_basis("step", CANONICAL_LABELS)
    x1 = Composition((0.417, 0.125, 0.083, 0.375), CANONICAL_LABELS)
    x2 = Composition((0.317, 0.225, 0.083, 0.375), CANONICAL_LABELS)
    z1 = ilr(x1, basis).array()
    z2 = ilr(x2, basis).array()
    assert np.allclose(z1, [-1.02, 0.53, -0.78], atol=0.03)
    assert np.allclose(z2, [-1.12, 0.06, -0.34], atol=0.03)
    assert np.allclose(z2 - z1, [-0.1, -0.48, 0.44], atol=0.03)
    _ok(2, "reference ilr coordinates and contrast weights within 0.03")


def test_criterion_03_simplex_property_suite():
    """Group axioms, ilr round trip below 1e-10 over 1000 compositions,
    isometry, linearity, and closure scale invariance."""
    rng = np.random.default_rng(202)
    basis = pivot_basis("step", CANONICAL_LABELS)
    e = uniform(CANONICAL_LABELS)
    worst_rt = 0.0
    for _ in range(1000):
        a = closure_values(rng.uniform(0.01, 10, 4), CANONICAL_LABELS)
        b = closure_values(rng.uniform(0.01, 10, 4), CANONICAL_LABELS)
        worst_rt = max(worst_rt, np.abs(
            ilr_inverse(ilr(a, basis), basis).array() - a.array()).max())
        # commutativity, identity, inverse
        assert np.allclose(perturb(a, b).array(), perturb(b, a).array(),
                           atol=1e-14)
        assert np.allclose(perturb(a, e).array(), a.array(), atol=1e-14)
        assert np.allclose(perturb(a, inverse(a)).array(), e.array(),
                           atol=1e-14)
        # isometry and linearity
        dz = np.linalg.norm(ilr(a, basis).array() - ilr(b, basis).array())
        assert dz == pytest.approx(aitchison_distance(a, b), abs=1e-10)
        lhs = ilr(perturb(a, power(1.7, b)), basis).array()
        rhs = ilr(a, basis).array() + 1.7 * ilr(b, basis).array()
        assert np.allclose(lhs, rhs, atol=1e-10)
        # scale invariance of closure
        raw = rng.uniform(0.01, 10, 4)
        assert np.allclose(closure_values(raw, CANONICAL_LABELS).array(),
                           closure_values(raw * 37.5, CANONICAL_LABELS).array(),
                           atol=1e-14)
    assert worst_rt < 1e-10
    _ok(3, f"axioms hold; worst ilr round-trip error {worst_rt:.2e}")


def test_criterion_04_coda_basis_invariance():
    """Fitted values, residuals, and a fixed contrast agree within 1e-8
    across three distinct orthonormal bases on a simulated cohort."""
    cohort = make_cohort(n=1000, seed=40,
                         behavior_effects={"step": 0.002, "sit": -0.0005})
    bases = [
        pivot_basis("step", CANONICAL_LABELS),
        pivot_basis("sleep", CANONICAL_LABELS),
        SBPartition(((1, 1, -1, -1), (1, -1, 0, 0), (0, 0, 1, -1)),
                    CANONICAL_LABELS),
    ]
    xa = closure_values([10, 3, 2, 9], CANONICAL_LABELS)
    xb = closure_values([9.5, 3, 2.5, 9], CANONICAL_LABELS)
    fitted, resids, contrasts = [], [], []
    parts = cohort.composition_array()
    for basis in bases:
        Z = ilr_array(parts, basis)
        X = np.column_stack([np.ones(cohort.n), Z,
                             cohort.covariates["female"],
                             cohort.covariates["bmi"]])
        fit = fit_ols(X, cohort.outcome)
        fitted.append(fit.fitted)
        resids.append(fit.residuals)
        za = ilr_array(xa.array()[None, :], basis)[0]
        zb = ilr_array(xb.array()[None, :], basis)[0]
        w = np.zeros(fit.p)
        w[1:4] = zb - za
        contrasts.append(linear_combination(fit, w).estimate)
    for k in (1, 2):
        assert np.abs(fitted[0] - fitted[k]).max() < 1e-8
        assert np.abs(resids[0] - resids[k]).max() < 1e-8
        assert abs(contrasts[0] - contrasts[k]) < 1e-8
    _ok(4, "predictions, residuals, and contrasts basis-invariant at 1e-8")


def test_criterion_05_closed_form_vs_constructive():
    """one_vs_remaining_effect(r) equals the generic composition contrast on
    the explicitly perturbed composition within 1e-10 across a grid of r."""
    cohort = make_cohort(n=800, seed=50, behavior_effects={"step": 0.002})
    cfit = fit_coda(cohort, "step", ["female", "bmi"])
    worst = 0.0
    for r in (-0.6, -0.3, -0.13, -0.02, 0.02, 0.13, 0.3, 0.6, 1.5, 4.0):
        closed = one_vs_remaining_effect(cfit, r)
        moved = proportional_reallocation_composition(cfit, r)
        generic = composition_contrast(cfit, cfit.baseline, moved,
                                       warn_extrapolation=False)
        worst = max(worst, abs(closed.estimate - generic.estimate),
                    abs(closed.se - generic.se))
    assert worst < 1e-10
    _ok(5, f"closed form vs constructive worst gap {worst:.2e}")


def test_criterion_06_ism_antisymmetry_and_equivalence():
    """Substitution tables are exactly antisymmetric, and the same
    reallocation computed from two independently fitted dropped-behavior
    models agrees."""
    from daycycle.ism import fit_ism, substitution_table
    cohort = make_cohort(n=700, seed=60,
                         behavior_effects={"step": 0.002, "stand": 0.0005})
    covs = ["female", "bmi"]
    tab = substitution_table(cohort, covs, minutes=30.0)
    d = len(tab.labels)
    for i in range(d):
        for j in range(d):
            if i != j:
                assert tab.estimate[i, j] == -tab.estimate[j, i]
                assert tab.ci_low[i, j] == -tab.ci_high[j, i]
    f_a = fit_ism(cohort, dropped="step", covariates=covs)
    f_b = fit_ism(cohort, dropped="sit", covariates=covs)
    w_a = np.zeros(f_a.fit.p)
    w_a[f_a.fit.index("sit")] = -30.0
    w_b = np.zeros(f_b.fit.p)
    w_b[f_b.fit.index("step")] = 30.0
    ea = linear_combination(f_a.fit, w_a)
    eb = linear_combination(f_b.fit, w_b)
    assert ea.estimate == pytest.approx(eb.estimate, abs=1e-9)
    assert ea.se == pytest.approx(eb.se, abs=1e-9)
    _ok(6, "antisymmetry exact; dropped-behavior models equivalent")


def test_criterion_07_em_monotone_and_bic_selection():
    """EM log-likelihood is monotone (1e-8 relative slack); on a separated
    3-class cohort of N=2000, 20-start EM recovers the true means within
    3 Monte Carlo SEs and BIC picks K=3 in at least 18 of 20 replications."""
    true_means = np.array([[-4.0, 0.0], [0.0, 3.5], [4.0, 0.0]])

    def draw(seed, n=2000):
        rng = np.random.default_rng(seed)
        sizes = rng.multinomial(n, [0.3, 0.3, 0.4])
        return np.vstack([
            rng.multivariate_normal(true_means[k], np.eye(2) * 0.6,
                                    size=sizes[k]) for k in range(3)])

    # monotonicity on one replayed trajectory
    X0 = draw(700)
    rng = np.random.default_rng(7)
    resp = rng.random((X0.shape[0], 3)) + 0.1
    resp /= resp.sum(axis=1, keepdims=True)
    weights, means, covs = _mstep(X0, resp, "free-var-free-cov")
    lls = []
    for _ in range(60):
        logr, ll = _log_resp(X0, weights, means, covs)
        lls.append(ll)
        weights, means, covs = _mstep(X0, np.exp(logr), "free-var-free-cov")
    diffs = np.diff(lls)
    assert np.all(diffs >= -1e-8 * np.maximum(1.0, np.abs(lls[:-1])))

    bic_wins = 0
    mean_estimates = []
    for rep in range(20):
        X = draw(701 + rep)
        bics = {}
        for K in (2, 3, 4):
            model, post = fit_mixture(X, K, starts=20, max_iter=120,
                                      tol=1e-6, seed=rep)
            bics[K] = fit_stats(model, post).bic
            if K == 3:
                order = np.argsort(model.means[:, 0])
                mean_estimates.append(model.means[order])
        if min(bics, key=bics.get) == 3:
            bic_wins += 1
    assert bic_wins >= 18
    est = np.array(mean_estimates)  # 20 x 3 x 2
    mc_se = est.std(axis=0, ddof=1) / math.sqrt(est.shape[0])
    gap = np.abs(est.mean(axis=0) - true_means[np.argsort(true_means[:, 0])])
    assert np.all(gap <= 3 * np.maximum(mc_se, 1e-6))
    _ok(7, f"LL monotone; BIC selected K=3 in {bic_wins}/20; means within "
           "3 MC SEs")


def test_criterion_08_step3_bias_demonstration():
    """Across 200 cohorts (N=1000, entropy near 0.55, true effect 0.25) the
    naive estimator attenuates by at least 15% while BCH is unbiased within
    3 MC SEs, has larger SEs, and at least 90% CI coverage."""
    sep, delta, n = 2.2, 0.25, 1000
    naive_est, bch_est, naive_se, bch_se = [], [], [], []
    covered = 0
    entropies = []
    for rep in range(200):
        rng = np.random.default_rng(8000 + rep)
        classes = rng.binomial(1, 0.5, n)
        x = rng.normal(classes * sep, 1.0)
        lp = np.column_stack([-0.5 * x ** 2, -0.5 * (x - sep) ** 2])
        post = np.exp(lp - logsumexp(lp, axis=1, keepdims=True))
        assign = np.argmax(post, axis=1)
        y = 0.1 + delta * classes + rng.normal(0, 0.5, n)
        pc = np.clip(post, 1e-300, 1)
        entropies.append(1 + (post * np.log(pc)).sum() / (n * math.log(2)))
        nv = step3_distal(post, assign, y, method="naive", reference=0)
        bc = step3_distal(post, assign, y, method="bch", reference=0)
        e, s = nv.class_effect(1)
        naive_est.append(e)
        naive_se.append(s)
        e, s = bc.class_effect(1)
        bch_est.append(e)
        bch_se.append(s)
        if e - 1.959963984540054 * s <= delta <= e + 1.959963984540054 * s:
            covered += 1
    assert abs(np.mean(entropies) - 0.55) < 0.05
    attenuation = 1.0 - abs(np.mean(naive_est)) / delta
    assert attenuation >= 0.15
    mc_se = np.std(bch_est, ddof=1) / math.sqrt(len(bch_est))
    assert abs(np.mean(bch_est) - delta) <= 3 * mc_se
    assert np.mean(bch_se) > np.mean(naive_se)
    coverage = covered / 200
    assert coverage >= 0.90
    _ok(8, f"naive attenuated {100 * attenuation:.0f}%; BCH unbiased, "
           f"coverage {100 * coverage:.0f}%")


def test_criterion_09_blrt_sanity():
    """BLRT keeps its size under a true K-1 model (p > 0.05 in at least
    15/20 runs) and has power against a separated K-class truth
    (p <= 0.01 in at least 18/20), 100 bootstrap replicates each."""
    null_ok = 0
    for rep in range(20):
        rng = np.random.default_rng(900 + rep)
        X = rng.normal(0.0, 1.0, size=250)
        res = blrt(X, 2, n_boot=100, starts=6, starts_boot=4,
                   max_iter=80, tol=1e-5, seed=rep)
        if res["p_value"] > 0.05:
            null_ok += 1
    power_ok = 0
    for rep in range(20):
        rng = np.random.default_rng(950 + rep)
        cls = rng.binomial(1, 0.5, 250)
        X = rng.normal(cls * 4.0, 1.0)
        res = blrt(X, 2, n_boot=100, starts=6, starts_boot=4,
                   max_iter=80, tol=1e-5, seed=rep)
        if res["p_value"] <= 0.01:
            power_ok += 1
    assert null_ok >= 15
    assert power_ok >= 18
    _ok(9, f"null retained {null_ok}/20; separated rejected {power_ok}/20")


def test_criterion_10_derived_remainder_stats():
    """Model-based moments of the remainder behavior match brute force on
    1e5 simulated draws within 3 SEs."""
    model = MixtureModel(
        weights=np.array([0.4, 0.6]),
        means=np.array([[0.42, 0.15, 0.05], [0.50, 0.10, 0.03]]),
        covs=np.array([
            [[0.004, -0.0020, -0.0003],
             [-0.0020, 0.0035, 0.0002],
             [-0.0003, 0.0002, 0.0008]],
            [[0.005, -0.0025, -0.0002],
             [-0.0025, 0.0030, 0.0001],
             [-0.0002, 0.0001, 0.0005]],
        ]),
        structure="free-var-free-cov", loglik=0.0, n=10,
        labels=("sit", "stand", "step"))
    stats = derived_sleep_stats(model)
    rng = np.random.default_rng(101)
    n = 100000
    for k in range(2):
        draws = rng.multivariate_normal(model.means[k], model.covs[k], n)
        rem = 1.0 - draws.sum(axis=1)
        se_mean = rem.std() / math.sqrt(n)
        assert stats["mean"][k] == pytest.approx(rem.mean(), abs=3 * se_mean)
        se_sd = rem.std() / math.sqrt(2 * (n - 1))
        assert stats["sd"][k] == pytest.approx(rem.std(ddof=1), abs=3 * se_sd)
        for j in range(3):
            rho = np.corrcoef(rem, draws[:, j])[0, 1]
            se_rho = (1 - rho ** 2) / math.sqrt(n - 3)
            assert stats["corr"][k][j] == pytest.approx(rho, abs=3 * se_rho)
    _ok(10, "remainder mean/SD/correlations within 3 Monte Carlo SEs")


def test_criterion_11_ingestion_rules(tmp_path):
    """Wear and valid-day thresholds are exact at the boundary, and day-level
    CSV round trips are byte-stable."""
    def day(pid, i, wear):
        in_bed = datetime.fromisoformat(f"2020-01-{i:02d}T22:00:00")
        return DayRecord(pid, f"2020-01-{i:02d}", 600.0, 200.0, 80.0,
                         in_bed, in_bed + timedelta(hours=8), wear)

    at = [day("exact", i, float(MIN_WEAR_MINUTES))
          for i in range(1, MIN_VALID_DAYS + 1)]
    below = [day("below", i, MIN_WEAR_MINUTES - 1e-9)
             for i in range(1, MIN_VALID_DAYS + 1)]
    three = [day("short", i, MIN_WEAR_MINUTES + 100.0)
             for i in range(1, MIN_VALID_DAYS)]
    valid = validate_days(at + below + three)
    assert set(valid) == {"exact"}
    assert len(valid["exact"]) == MIN_VALID_DAYS

    p1 = tmp_path / "days1.csv"
    p2 = tmp_path / "days2.csv"
    write_day_csv(at + three, p1)
    back, errors = load_day_csv(p1)
    assert errors == [] and back == at + three
    write_day_csv(back, p2)
    assert p1.read_bytes() == p2.read_bytes()
    _ok(11, "boundaries exact; day CSV round trip byte-stable")


def test_criterion_12_end_to_end_cli(tmp_path):
    """simulate (seed 42) -> describe -> lpa select -> step3 bch produces the
    full report set, and a repeated run is bit-identical."""
    reports = ("describe.json", "describe.csv", "lpa_selection.json",
               "lpa_selection.csv", "lpa_model.json", "lpa_error_matrix.json",
               "lpa_profiles.json", "step3_report.json", "step3_report.csv")
    digests = []
    for run in ("one", "two"):
        d = tmp_path / run
        d.mkdir()
        csv_path = d / "cohort.csv"
        assert cli_main(["simulate", "--n", "400", "--seed", "42",
                         "-o", str(csv_path)]) == 0
        assert cli_main(["describe", str(csv_path), "-o", str(d)]) == 0
        assert cli_main(["lpa", str(csv_path), "-o", str(d),
                         "--classes", "2:3", "--starts", "20",
                         "--seed", "0"]) == 0
        assert cli_main(["step3", str(d / "lpa_model.json"), str(csv_path),
                         "-o", str(d), "--method", "bch"]) == 0
        digests.append({name: (d / name).read_bytes() for name in reports})
        selection = json.loads((d / "lpa_selection.json").read_text())
        assert [row["K"] for row in selection] == [2, 3]
    for name in reports:
        assert digests[0][name] == digests[1][name], name
    _ok(12, "pipeline complete and bit-identical across repeated runs")
