"""Shared synthetic-cohort builders for the test suite."""

import numpy as np

from daycycle.cohort import BEHAVIOR_LABELS, COVARIATE_COLUMNS, CohortTable


def make_cohort(n=300, seed=0, behavior_effects=None, outcome_fn=None,
                noise_sd=0.5, constant_total=False):
    """Cohort with Dirichlet time use and a known outcome model.

    ``behavior_effects`` maps behavior label to a per-minute linear effect;
    ``outcome_fn`` (taking the N x 4 minutes matrix) overrides it for
    nonlinear truths.
    """
    rng = np.random.default_rng(seed)
    props = rng.dirichlet([20.0, 8.0, 3.0, 17.0], size=n)
    total = np.full(n, 1440.0) if constant_total else rng.normal(1440, 8, n)
    behaviors = props * total[:, None]
    covariates = {c: np.zeros(n) for c in COVARIATE_COLUMNS}
    covariates["female"] = rng.binomial(1, 0.5, n).astype(float)
    covariates["bmi"] = rng.normal(27, 4, n)
    if outcome_fn is not None:
        signal = outcome_fn(behaviors)
    elif behavior_effects is not None:
        signal = sum(behavior_effects.get(b, 0.0) * behaviors[:, j]
                     for j, b in enumerate(BEHAVIOR_LABELS))
    else:
        signal = np.zeros(n)
    y = (0.5 + signal + 0.08 * covariates["female"]
         - 0.004 * covariates["bmi"] + rng.normal(0, noise_sd, n))
    return CohortTable(
        ids=[f"p{i:05d}" for i in range(n)],
        behaviors=behaviors,
        total=total,
        covariates=covariates,
        outcome=y,
        valid_days=np.full(n, 7, dtype=int),
    )
