"""Inference on target coefficients in high-dimensional linear models.

The workhorse is the partialling-out Double Lasso: residualize the
outcome and the target on the controls with plug-in Lasso, then regress
residual on residual. Variants with the same interface cover several
targets at once (with a simultaneous band), double selection, the
desparsified Lasso, and, for demonstrations, invalid single selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import DimensionMismatch, WeakResidualVariation
from .linalg import ols_fit, robust_variance
from .penalized import cv_fit, lasso_fit, lasso_plugin, post_lasso_coefficients
from .rng import stream

SIMULTANEOUS_DRAWS = 100_000
WEAK_VARIATION_RTOL = 1e-10


@dataclass
class TargetInference:
    """Per-target estimates with pointwise and simultaneous intervals."""

    estimates: np.ndarray
    std_errors: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    band_lower: np.ndarray
    band_upper: np.ndarray
    joint_variance: np.ndarray  # V_hat, per-sqrt(n) scale
    critical_value: float
    p_values: np.ndarray  # marginal, normal-based
    residual_outcome: np.ndarray | None = None
    residual_targets: np.ndarray | None = None
    warning: str | None = None
    alpha: float = 0.05
    n: int = 0

    @property
    def estimate(self) -> float:
        return float(self.estimates[0])

    @property
    def std_error(self) -> float:
        return float(self.std_errors[0])


def _lasso_residual(y, W, lam_rule: str, residuals: str = "post",
                    seed: int = 0):
    """Partial a vector out of high-dimensional controls via Lasso.

    With ``residuals="post"`` the selected columns are refit by least
    squares before residualizing, which removes the shrinkage that the
    penalty leaves in the fitted values. ``residuals="lasso"`` keeps the
    penalized fit as-is.
    """
    y = np.asarray(y, dtype=float).ravel()
    if W is None or W.shape[1] == 0:
        return y - np.mean(y)
    fit = _rule_fit(y, W, lam_rule, seed)
    if residuals == "post":
        return _post_refit_residual(y, W, fit)
    if residuals != "lasso":
        raise ValueError(f"unknown residual mode {residuals!r}")
    return y - fit.predict(W)


def _rule_fit(y, W, lam_rule: str, seed: int = 0):
    """Lasso of y on W with the penalty picked by the named rule."""
    if lam_rule == "plugin":
        return lasso_plugin(W, y)
    if lam_rule == "zero":
        return lasso_fit(W, y, lam=0.0)
    if lam_rule not in ("cv", "cv1se"):
        raise ValueError(f"unknown lambda rule {lam_rule!r}")
    from .learners import make_folds

    plan = make_folds(y.size, 5, seed)
    grid = _lambda_max(W, y) * np.geomspace(0.01, 1.0, 16)
    report = cv_fit("lasso", W, y, grid, plan)
    if lam_rule == "cv":
        return report.refit
    # Largest penalty whose CV error is within one standard error of
    # the minimum; sparser and less prone to overfit.
    best = report.selected_index
    se = float(np.std(report.fold_mses[best], ddof=1))
    se /= np.sqrt(report.fold_mses.shape[1])
    ok = np.flatnonzero(report.cv_mse <= report.cv_mse[best] + se)
    return lasso_fit(W, y, lam=grid[int(ok.max())])


def _lambda_max(W, y) -> float:
    """Smallest penalty at which the Lasso solution is all zeros."""
    Xc = W - W.mean(axis=0)
    scale = np.sqrt(np.mean(Xc**2, axis=0))
    safe = np.where(scale > 0, scale, 1.0)
    yc = y - y.mean()
    top = float(np.max(np.abs((Xc / safe).T @ yc), initial=0.0))
    return 2.0 * top if top > 0 else 1.0


def _post_refit_residual(y, W, fit) -> np.ndarray:
    """Residual from a least-squares refit on the Lasso support."""
    active = np.flatnonzero(fit.coefficients)
    if active.size == 0 or active.size >= y.size:
        return y - np.mean(y)
    Z = np.column_stack([np.ones(y.size), W[:, active]])
    coef, *_ = np.linalg.lstsq(Z, y, rcond=None)
    return y - Z @ coef


def _single_target_inference(estimate, variance, n, alpha, resid_y=None,
                             resid_d=None, warning=None) -> TargetInference:
    se = float(np.sqrt(variance / n))
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    pval = 2.0 * stats.norm.sf(abs(estimate) / se) if se > 0 else 0.0
    return TargetInference(
        estimates=np.array([estimate]),
        std_errors=np.array([se]),
        ci_lower=np.array([estimate - z * se]),
        ci_upper=np.array([estimate + z * se]),
        band_lower=np.array([estimate - z * se]),
        band_upper=np.array([estimate + z * se]),
        joint_variance=np.array([[variance]]),
        critical_value=float(z),
        p_values=np.array([pval]),
        residual_outcome=resid_y,
        residual_targets=None if resid_d is None else np.asarray(resid_d)[:, None],
        warning=warning,
        alpha=alpha,
        n=n,
    )


def double_lasso(y, d, W, lam_rule: str = "plugin", alpha: float = 0.05,
                 residuals: str = "post") -> TargetInference:
    """Double Lasso for a single target coefficient.

    Both the outcome and the target are partialled out of the controls by
    Lasso; the estimate is the slope of the residualized regression with a
    heteroskedasticity-robust standard error. By default each partialling
    step refits the selected controls by least squares before taking
    residuals; pass ``residuals="lasso"`` to residualize against the
    penalized fit directly.
    """
    y = np.asarray(y, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    W = _control_matrix(W, y.size)
    n = y.size
    if d.size != n or n <= 2:
        raise DimensionMismatch("need matching y, d with n > 2")

    ry = _lasso_residual(y, W, lam_rule, residuals)
    rd = _lasso_residual(d, W, lam_rule, residuals)
    denom = float(np.mean(rd**2))
    if denom < WEAK_VARIATION_RTOL * float(np.mean(d**2)):
        raise WeakResidualVariation(
            "target has no residual variation after partialling out"
        )
    estimate = float(np.mean(rd * ry) / denom)
    eps = ry - estimate * rd
    variance = float(np.mean(rd**2 * eps**2)) / denom**2
    return _single_target_inference(estimate, variance, n, alpha, ry, rd)


def _control_matrix(W, n) -> np.ndarray:
    if W is None:
        return np.empty((n, 0))
    W = np.asarray(W, dtype=float)
    if W.ndim == 1:
        W = W[:, None]
    if W.shape[0] != n:
        raise DimensionMismatch("controls row count mismatch")
    return W


def simultaneous_critical_value(correlation: np.ndarray, alpha: float,
                                seed: int = 0,
                                draws: int = SIMULTANEOUS_DRAWS) -> float:
    """(1-alpha)-quantile of the sup-norm of a N(0, correlation) draw."""
    correlation = np.atleast_2d(np.asarray(correlation, dtype=float))
    p = correlation.shape[0]
    if p == 1:
        return float(stats.norm.ppf(1.0 - alpha / 2.0))
    # Factor via eigendecomposition so rank-deficient (perfectly
    # correlated) cases are handled without jitter.
    vals, vecs = np.linalg.eigh(correlation)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    z = stream(seed, "simultaneous-band").standard_normal((draws, p))
    sup = np.max(np.abs(z @ root.T), axis=1)
    return float(np.quantile(sup, 1.0 - alpha))


def many_targets(y, D, W, alpha: float = 0.05, lam_rule: str = "plugin",
                 seed: int = 0) -> TargetInference:
    """One-by-one Double Lasso over the columns of D with a joint band.

    Target ell is partialled out of the other targets stacked with the
    shared controls. The joint variance uses cross residual products and
    the simultaneous critical value comes from a Gaussian sup-norm
    Monte Carlo on the implied correlation matrix.
    """
    y = np.asarray(y, dtype=float).ravel()
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D[:, None]
    n, p1 = D.shape
    W = _control_matrix(W, n)

    ry_all = np.empty((n, p1))
    rd_all = np.empty((n, p1))
    estimates = np.empty(p1)
    for ell in range(p1):
        others = np.delete(D, ell, axis=1)
        controls = np.column_stack([others, W]) if others.size or W.size else W
        ry = _lasso_residual(y, controls, lam_rule)
        rd = _lasso_residual(D[:, ell], controls, lam_rule)
        denom = float(np.mean(rd**2))
        if denom < WEAK_VARIATION_RTOL * float(np.mean(D[:, ell] ** 2)):
            raise WeakResidualVariation(f"target {ell} has no residual variation")
        estimates[ell] = np.mean(rd * ry) / denom
        ry_all[:, ell] = ry
        rd_all[:, ell] = rd

    eps = ry_all - rd_all * estimates[None, :]
    denoms = np.mean(rd_all**2, axis=0)
    # V_lk = (E[rd_l^2])^-1 E[rd_l rd_k eps_l eps_k] (E[rd_k^2])^-1
    cross = (rd_all * eps).T @ (rd_all * eps) / n
    V = cross / denoms[:, None] / denoms[None, :]
    V = 0.5 * (V + V.T)
    se = np.sqrt(np.diag(V) / n)

    scale = np.sqrt(np.diag(V))
    corr = V / scale[:, None] / scale[None, :]
    c = simultaneous_critical_value(corr, alpha, seed=seed)
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    pvals = 2.0 * stats.norm.sf(np.abs(estimates) / se)
    return TargetInference(
        estimates=estimates,
        std_errors=se,
        ci_lower=estimates - z * se,
        ci_upper=estimates + z * se,
        band_lower=estimates - c * se,
        band_upper=estimates + c * se,
        joint_variance=V,
        critical_value=c,
        p_values=pvals,
        residual_outcome=None,
        residual_targets=rd_all,
        alpha=alpha,
        n=n,
    )


def double_selection(y, d, W, lam_rule: str = "plugin",
                     alpha: float = 0.05) -> TargetInference:
    """Refit OLS of y on d plus the union of Lasso-selected controls."""
    y = np.asarray(y, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    n = y.size
    W = _control_matrix(W, n)

    selected: set[int] = set()
    if W.shape[1]:
        for target in (y, d):
            fit = _rule_fit(target, W, lam_rule)
            selected.update(int(j) for j in fit.active_set)
    keep = sorted(selected)
    design = np.column_stack([np.ones(n), d, W[:, keep]])
    fit = ols_fit(design, y)
    var = robust_variance(fit, "HC0")
    estimate = float(fit.coefficients[1])
    variance = float(var.matrix[1, 1] * n)
    return _single_target_inference(estimate, variance, n, alpha)


def desparsified_lasso(y, d, W, lam_rule: str = "plugin",
                       alpha: float = 0.05) -> TargetInference:
    """Debias the Lasso coefficient of d using the residualized target
    as the instrument."""
    y = np.asarray(y, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    n = y.size
    W = _control_matrix(W, n)

    full = np.column_stack([d, W])
    if lam_rule == "plugin":
        joint = lasso_plugin(full, y)
        stage = lasso_plugin(W, d) if W.shape[1] else None
    elif lam_rule == "zero":
        joint = lasso_fit(full, y, lam=0.0)
        stage = lasso_fit(W, d, lam=0.0) if W.shape[1] else None
    else:
        raise ValueError(f"unknown lambda rule {lam_rule!r}")

    if stage is None:
        rd = d - np.mean(d)
    else:
        rd = d - stage.predict(W)
    denom = float(np.mean(d * rd))
    if abs(denom) < WEAK_VARIATION_RTOL * max(float(np.mean(d**2)), 1e-300):
        raise WeakResidualVariation("instrumenting residual is degenerate")
    partial_y = y - joint.intercept - W @ joint.coefficients[1:]
    estimate = float(np.mean(partial_y * rd) / denom)
    eps = partial_y - estimate * d
    variance = float(np.mean(rd**2 * eps**2)) / denom**2
    return _single_target_inference(estimate, variance, n, alpha)


def naive_single_selection(y, d, W, alpha: float = 0.05) -> TargetInference:
    """Single-selection refit. Invalid for inference; kept for demos and
    the result carries a warning tag saying so."""
    y = np.asarray(y, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    n = y.size
    W = _control_matrix(W, n)

    full = np.column_stack([d, W])
    fit = lasso_plugin(full, y)
    keep = sorted(int(j) - 1 for j in fit.active_set if j >= 1)
    design = np.column_stack([np.ones(n), d, W[:, keep]])
    ofit = ols_fit(design, y)
    var = robust_variance(ofit, "HC0")
    estimate = float(ofit.coefficients[1])
    variance = float(var.matrix[1, 1] * n)
    out = _single_target_inference(estimate, variance, n, alpha)
    out.warning = "single selection is not Neyman orthogonal; inference invalid"
    return out
