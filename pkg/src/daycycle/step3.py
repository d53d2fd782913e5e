"""Step-3 inference relating latent profiles to external variables.

Modal class assignment carries classification error; the naive regression of
an outcome on assigned classes attenuates effects and understates standard
errors.  The BCH correction expands each subject into weighted
pseudo-observations (weights from the inverse classification-error matrix)
so the weighted regression targets the latent classes; the ML method builds
the measurement error into a multinomial likelihood for class-membership
prediction from covariates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize, stats

from .linmod import Z95, WaldTest


class Step3Error(ValueError):
    pass


@dataclass(frozen=True)
class Step3Result:
    method: str  # "naive" or "bch"
    reference: int
    classes: tuple[int, ...]  # non-reference classes, coefficient order
    coef: np.ndarray  # class effects then covariates then intercept
    robust_se: np.ndarray
    labels: tuple[str, ...]
    overall: WaldTest  # joint test of all class effects
    n: int

    def class_effect(self, k: int) -> tuple[float, float]:
        """(estimate, robust SE) for class k relative to the reference."""
        if k == self.reference:
            return 0.0, 0.0
        i = self.classes.index(k)
        return float(self.coef[i]), float(self.robust_se[i])


def _expanded_design(assignments: np.ndarray, weights_matrix: np.ndarray,
                     covariates: np.ndarray | None, reference: int
                     ) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                tuple[int, ...], tuple[str, ...]]:
    """Pseudo-observation design: one row per (subject, latent class).

    Row weight for subject i and class k is weights_matrix[assign_i, k].
    The naive method is the special case of an identity weight matrix, where
    zero-weight rows contribute exactly nothing.
    """
    n = assignments.shape[0]
    K = weights_matrix.shape[0]
    classes = tuple(k for k in range(K) if k != reference)
    q = 0 if covariates is None else covariates.shape[1]
    rows = n * K
    X = np.zeros((rows, len(classes) + q + 1))
    w = np.empty(rows)
    subject = np.empty(rows, dtype=int)
    for k in range(K):
        sl = slice(k * n, (k + 1) * n)
        if k != reference:
            X[sl, classes.index(k)] = 1.0
        if q:
            X[sl, len(classes):len(classes) + q] = covariates
        X[sl, -1] = 1.0
        w[sl] = weights_matrix[assignments, k]
        subject[sl] = np.arange(n)
    labels = tuple(f"class_{k}" for k in classes)
    if q:
        labels += tuple(f"x{j}" for j in range(q))
    labels += ("intercept",)
    return X, w, subject, classes, labels


def _weighted_cluster_ols(X: np.ndarray, y: np.ndarray, w: np.ndarray,
                          subject: np.ndarray, n_subjects: int
                          ) -> tuple[np.ndarray, np.ndarray]:
    """WLS with cluster-by-subject sandwich covariance.

    Weights may be negative (rows of an inverted error matrix); the normal
    equations still apply.  The sandwich gets the HC1-style N/(N-p) factor so
    it reduces exactly to the heteroskedasticity-robust OLS covariance when
    each subject has one effective row.
    """
    p = X.shape[1]
    Xw = X * w[:, None]
    A = X.T @ Xw
    try:
        bread = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        raise Step3Error("singular weighted design") from None
    coef = bread @ (Xw.T @ y)
    resid = y - X @ coef
    g = np.zeros((n_subjects, p))
    contrib = Xw * resid[:, None]
    np.add.at(g, subject, contrib)
    meat = g.T @ g
    cov = bread @ meat @ bread
    cov *= n_subjects / (n_subjects - p)
    return coef, cov


def step3_distal(posteriors: np.ndarray, assignments: np.ndarray,
                 outcome: np.ndarray, covariates: np.ndarray | None = None,
                 method: str = "bch", reference: int | None = None,
                 error_matrix: np.ndarray | None = None) -> Step3Result:
    """Class-specific outcome differences, naive or BCH-corrected.

    ``reference`` defaults to the largest assigned class.  For BCH the
    classification-error matrix defaults to the one estimated from the
    posteriors and assignments; its inverse supplies the pseudo-observation
    weights (which can be negative and are kept as such).
    """
    from .lpa import classification_error_matrix

    posteriors = np.asarray(posteriors, dtype=float)
    assignments = np.asarray(assignments, dtype=int)
    outcome = np.asarray(outcome, dtype=float)
    n, K = posteriors.shape
    if reference is None:
        reference = int(np.bincount(assignments, minlength=K).argmax())
    if method == "naive":
        W = np.eye(K)
    elif method == "bch":
        if error_matrix is None:
            error_matrix = classification_error_matrix(posteriors, assignments)
        try:
            W = np.linalg.inv(error_matrix)
        except np.linalg.LinAlgError:
            raise Step3Error("classification-error matrix is singular") from None
    else:
        raise Step3Error(f"unknown method {method!r}")
    X, w, subject, classes, labels = _expanded_design(
        assignments, W, covariates, reference)
    y = np.tile(outcome, K)
    coef, cov = _weighted_cluster_ols(X, y, w, subject, n)
    se = np.sqrt(np.diag(cov))
    nc = len(classes)
    sub = cov[:nc, :nc]
    stat = float(coef[:nc] @ np.linalg.solve(sub, coef[:nc]))
    overall = WaldTest(stat, nc, float(stats.chi2.sf(stat, nc)))
    return Step3Result(method, reference, classes, coef, se, labels,
                       overall, n)


def ci_95(result: Step3Result, k: int) -> tuple[float, float]:
    est, se = result.class_effect(k)
    return est - Z95 * se, est + Z95 * se


@dataclass(frozen=True)
class CovariateResult:
    coef: np.ndarray  # (K-1) x (q+1): per non-reference class, intercept last
    robust_se: np.ndarray
    reference: int
    wald: WaldTest  # joint test of all covariate slopes
    converged: bool
    loglik: float


def step3_covariate(assignments: np.ndarray, error_matrix: np.ndarray,
                    covariates: np.ndarray, reference: int = 0
                    ) -> CovariateResult:
    """ML multinomial regression of the latent class on covariates, treating
    the modal assignment as an error-prone measurement of the latent class.

    Per-subject likelihood: sum_k P(class k | x_i) * D[k, assigned_i].
    With an identity error matrix this is the ordinary multinomial logit on
    the assignments.
    """
    assignments = np.asarray(assignments, dtype=int)
    Z = np.column_stack([np.asarray(covariates, dtype=float),
                         np.ones(assignments.shape[0])])
    n, q1 = Z.shape
    D = np.asarray(error_matrix, dtype=float)
    K = D.shape[0]
    if np.linalg.matrix_rank(D) < K:
        raise Step3Error("classification-error matrix is singular")
    free = [k for k in range(K) if k != reference]
    nf = len(free)
    Dcols = D[:, assignments].T  # n x K: D[k, assigned_i]

    def unpack(theta):
        B = np.zeros((K, q1))
        B[free] = theta.reshape(nf, q1)
        return B

    def neg_loglik_grad(theta):
        B = unpack(theta)
        eta = Z @ B.T  # n x K
        eta -= eta.max(axis=1, keepdims=True)
        expeta = np.exp(eta)
        pi = expeta / expeta.sum(axis=1, keepdims=True)
        L = (pi * Dcols).sum(axis=1)
        L = np.maximum(L, 1e-300)
        nll = -float(np.log(L).sum())
        # d log L_i / d eta_k = pi_k (D[k,w_i] - sum_m pi_m D[m,w_i]) / L_i
        inner = (pi * Dcols).sum(axis=1, keepdims=True)
        dEta = pi * (Dcols - inner) / L[:, None]  # n x K
        grad = -(dEta[:, free].T @ Z)  # nf x q1
        return nll, grad.ravel()

    theta0 = np.zeros(nf * q1)
    res = optimize.minimize(neg_loglik_grad, theta0, jac=True, method="BFGS",
                            options={"maxiter": 500, "gtol": 1e-7})
    theta = res.x
    if not np.isfinite(res.fun):
        raise Step3Error("multinomial likelihood did not converge")

    # Robust (sandwich) covariance: numerical Hessian bread, score outer meat.
    def scores(th):
        B = unpack(th)
        eta = Z @ B.T
        eta -= eta.max(axis=1, keepdims=True)
        expeta = np.exp(eta)
        pi = expeta / expeta.sum(axis=1, keepdims=True)
        L = np.maximum((pi * Dcols).sum(axis=1), 1e-300)
        inner = (pi * Dcols).sum(axis=1, keepdims=True)
        dEta = pi * (Dcols - inner) / L[:, None]
        return dEta[:, free][:, :, None] * Z[:, None, :]  # n x nf x q1

    S = scores(theta).reshape(n, -1)
    meat = S.T @ S
    H = _numerical_hessian(lambda t: neg_loglik_grad(t)[0], theta)
    try:
        bread = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        raise Step3Error("singular Hessian; possible separation") from None
    cov = bread @ meat @ bread
    se = np.sqrt(np.maximum(np.diag(cov), 0.0)).reshape(nf, q1)
    coef = theta.reshape(nf, q1)

    # Joint Wald test over all covariate slopes (intercepts excluded).
    slope_idx = [i * q1 + j for i in range(nf) for j in range(q1 - 1)]
    b = theta[slope_idx]
    V = cov[np.ix_(slope_idx, slope_idx)]
    stat = float(b @ np.linalg.solve(V, b))
    wald = WaldTest(stat, len(slope_idx), float(stats.chi2.sf(stat, len(slope_idx))))
    return CovariateResult(coef, se, reference, wald, bool(res.success),
                           -float(res.fun))


def _numerical_hessian(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    n = x.size
    H = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            pp = x.copy(); pp[i] += eps; pp[j] += eps
            pm = x.copy(); pm[i] += eps; pm[j] -= eps
            mp = x.copy(); mp[i] -= eps; mp[j] += eps
            mm = x.copy(); mm[i] -= eps; mm[j] -= eps
            H[i, j] = H[j, i] = (f(pp) - f(pm) - f(mp) + f(mm)) / (4 * eps * eps)
    return 0.5 * (H + H.T)
