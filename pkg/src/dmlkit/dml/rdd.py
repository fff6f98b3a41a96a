"""Sharp regression discontinuity estimation."""

from __future__ import annotations

import numpy as np
from scipy import stats

from ..errors import OneSideEmpty
from ..linalg import ols_fit, robust_variance
from .engine import DmlResult
from .estimators import _columns


def rdd_sharp(y, x, cutoff: float, bandwidth: float,
              kernel: str = "triangular", Z=None,
              alpha: float = 0.05) -> DmlResult:
    """Local linear jump estimate at the cutoff.

    Kernel-weighted OLS of y on an intercept, the treatment indicator
    D = 1(x >= cutoff), the scaled running variable, and its interaction
    with D; optional covariates Z enter linearly.
    """
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(x, dtype=float).ravel()
    u = (x - cutoff) / bandwidth
    if kernel == "triangular":
        w = np.clip(1.0 - np.abs(u), 0.0, None)
    elif kernel == "uniform":
        w = (np.abs(u) <= 1.0).astype(float)
    else:
        raise ValueError(f"unknown kernel {kernel!r}")
    keep = w > 0.0
    treat = (x >= cutoff).astype(float)
    if not np.any(keep & (treat == 1.0)) or not np.any(keep & (treat == 0.0)):
        raise OneSideEmpty("need observations on both sides of the cutoff "
                           "within the bandwidth")
    Z = _columns(Z, y.size)
    design = np.column_stack(
        [np.ones(y.size), treat, u, treat * u] + ([Z] if Z.shape[1] else [])
    )
    fit = ols_fit(design[keep], y[keep], weights=w[keep])
    var = robust_variance(fit, "HC0")
    tau = float(fit.coefficients[1])
    se = float(var.std_errors[1])
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    n_used = int(np.sum(keep))
    return DmlResult(
        estimates=np.array([tau]),
        std_errors=np.array([se]),
        ci_lower=np.array([tau - z * se]),
        ci_upper=np.array([tau + z * se]),
        influence=np.zeros(n_used),
        variance=np.array([se**2 * n_used]),
        alpha=alpha,
        n=n_used,
        diagnostics={"bandwidth": bandwidth, "kernel": kernel,
                     "n_left": int(np.sum(keep & (treat == 0.0))),
                     "n_right": int(np.sum(keep & (treat == 1.0)))},
    )
