"""Inference on projections of the CATE: best linear predictor
coefficients with uniform bands, and the heterogeneity regression test."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..double_lasso import simultaneous_critical_value
from ..errors import ConstantModel
from ..linalg import ols_fit

CONSTANT_TOL = 1e-12


@dataclass
class BlpResult:
    coefficients: np.ndarray
    covariance: np.ndarray  # sampling covariance of the coefficients
    std_errors: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    alpha: float
    n: int
    grid_fit: np.ndarray | None = None
    grid_pointwise: tuple[np.ndarray, np.ndarray] | None = None
    grid_uniform: tuple[np.ndarray, np.ndarray] | None = None
    uniform_critical_value: float | None = None


def _sandwich(basis, residuals):
    n = basis.shape[0]
    Q = basis.T @ basis / n
    meat = (basis * residuals[:, None] ** 2).T @ basis / n
    Qinv = np.linalg.inv(Q)
    return Qinv @ meat @ Qinv / n


def blp_cate(signals, basis, alpha: float = 0.05, eval_basis=None,
             seed: int = 0) -> BlpResult:
    """Best linear predictor of the CATE in a user-supplied basis.

    Regresses the DR signals on the basis columns with a sandwich
    covariance. When an evaluation basis is supplied, pointwise and
    uniform bands for the fitted projection over those rows are computed,
    the latter via the Gaussian sup-norm Monte Carlo.
    """
    signals = np.asarray(signals, dtype=float).ravel()
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    fit = ols_fit(basis, signals)
    cov = _sandwich(basis, fit.residuals)
    se = np.sqrt(np.diag(cov))
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    out = BlpResult(
        coefficients=fit.coefficients,
        covariance=cov,
        std_errors=se,
        ci_lower=fit.coefficients - z * se,
        ci_upper=fit.coefficients + z * se,
        alpha=alpha,
        n=signals.size,
    )
    if eval_basis is not None:
        G = np.asarray(eval_basis, dtype=float)
        if G.ndim == 1:
            G = G[:, None]
        fitted = G @ fit.coefficients
        point_cov = G @ cov @ G.T
        point_se = np.sqrt(np.clip(np.diag(point_cov), 0.0, None))
        safe = np.where(point_se > 0, point_se, 1.0)
        corr = point_cov / safe[:, None] / safe[None, :]
        c = simultaneous_critical_value(corr, alpha, seed=seed)
        out.grid_fit = fitted
        out.grid_pointwise = (fitted - z * point_se, fitted + z * point_se)
        out.grid_uniform = (fitted - c * point_se, fitted + c * point_se)
        out.uniform_critical_value = c
    return out


def heterogeneity_blp_test(tau_values, signals, alpha: float = 0.05) -> dict:
    """Regress signals on the centered model predictions.

    The slope estimates Cov(true CATE, model) / Var(model); a
    significantly nonzero slope certifies detected heterogeneity, and
    the intercept estimates the ATE.
    """
    signals = np.asarray(signals, dtype=float).ravel()
    tau = np.asarray(tau_values, dtype=float).ravel()
    if float(np.var(tau)) <= CONSTANT_TOL:
        raise ConstantModel("model predictions have no variation")
    centered = tau - np.mean(tau)
    basis = np.column_stack([np.ones(signals.size), centered])
    fit = ols_fit(basis, signals)
    cov = _sandwich(basis, fit.residuals)
    se = np.sqrt(np.diag(cov))
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    slope = float(fit.coefficients[1])
    pval = 2.0 * stats.norm.sf(abs(slope) / se[1]) if se[1] > 0 else 0.0
    return {
        "intercept": float(fit.coefficients[0]),
        "slope": slope,
        "se": se,
        "p_value": float(pval),
        "ci_slope": (slope - z * se[1], slope + z * se[1]),
        "reject": pval < alpha,
    }
