"""Estimators for randomized experiments.

Three classical estimators of the ATE under random assignment: the
unadjusted two-means contrast (CL), the classical additive regression
adjustment (CRA), and the interactive adjustment with treatment-by-
covariate terms (IRA). All center covariates internally and report the
relative ATE by the delta method.
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from ..errors import OneArmEmpty
from ..linalg import ols_fit
from .engine import DmlResult
from .estimators import _check_binary, _columns


def _two_by_two_variance(eps, d):
    """Joint variance of (ate_hat, mean0_hat) from residuals eps.

    Uses the partialled-out representations: D - E_n[D] for the
    treatment contrast and 1 - D for the control mean.
    """
    n = eps.size
    dt = d - np.mean(d)
    ot = 1.0 - d
    v11 = np.mean(eps**2 * dt**2) / np.mean(dt**2) ** 2
    v22 = np.mean(eps**2 * ot**2) / np.mean(ot**2) ** 2
    v12 = np.mean(eps**2 * dt * ot) / (np.mean(ot**2) * np.mean(dt**2))
    return np.array([[v11, v12], [v12, v22]]) / n


def rct_estimators(y, d, W=None, mode: str = "CL",
                   alpha: float = 0.05) -> DmlResult:
    """ATE and relative ATE in a randomized experiment.

    mode "CL" compares arm means, "CRA" runs OLS of y on (1, d, W), and
    "IRA" adds the d*W interactions so each arm gets its own linear
    adjustment. The relative ATE is ate / E[Y(0)]; its negative is the
    conventional efficacy measure for adverse outcomes.
    """
    y = np.asarray(y, dtype=float).ravel()
    d = _check_binary(d, "treatment")
    n = y.size
    W = _columns(W, n)
    if not (np.any(d == 1) and np.any(d == 0)):
        raise OneArmEmpty("both arms must be present")
    Wc = W - W.mean(axis=0) if W.shape[1] else W
    if Wc.shape[1]:
        # Constant covariates carry no adjustment information and would
        # make the regression designs singular; drop them up front.
        Wc = Wc[:, np.ptp(Wc, axis=0) > 0.0]

    mode = mode.upper()
    if mode == "CL":
        mu1 = float(np.mean(y[d == 1]))
        mu0 = float(np.mean(y[d == 0]))
        ate = mu1 - mu0
        eps = y - np.where(d == 1, mu1, mu0)
    elif mode in ("CRA", "IRA"):
        design = np.column_stack([np.ones(n), d, Wc])
        if mode == "IRA":
            design = np.column_stack([design, d[:, None] * Wc])
        fit = ols_fit(design, y)
        ate = float(fit.coefficients[1])
        mu0 = float(fit.coefficients[0])
        eps = fit.residuals
    else:
        raise ValueError(f"unknown mode {mode!r}")

    cov = _two_by_two_variance(eps, d)
    se = float(np.sqrt(cov[0, 0]))
    rel = ate / mu0 if mu0 != 0.0 else np.nan
    if mu0 != 0.0:
        grad = np.array([1.0 / mu0, -ate / mu0**2])
        rel_se = float(np.sqrt(grad @ cov @ grad))
    else:
        rel_se = np.nan
    z = stats.norm.ppf(1.0 - alpha / 2.0)

    # Influence values of the ATE contrast (mean-zero by construction).
    dt = d - np.mean(d)
    influence = eps * dt / np.mean(dt**2)
    return DmlResult(
        estimates=np.array([ate]),
        std_errors=np.array([se]),
        ci_lower=np.array([ate - z * se]),
        ci_upper=np.array([ate + z * se]),
        influence=influence,
        variance=np.array([se**2 * n]),
        alpha=alpha,
        n=n,
        diagnostics={
            "mode": mode,
            "mean_control": mu0,
            "relative_ate": rel,
            "relative_ate_se": rel_se,
            "relative_ate_ci": (rel - z * rel_se, rel + z * rel_se),
            "efficacy": -rel,
            "efficacy_ci": (-(rel + z * rel_se), -(rel - z * rel_se)),
        },
    )
