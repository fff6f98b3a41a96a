"""Cross-fitted estimators: PLM, IRM (ATE/GATE/ATET), PLIV, and LATE."""

from __future__ import annotations

import numpy as np
from scipy import stats

from ..errors import (
    DimensionMismatch,
    EmptyGroup,
    ExactlyZeroCovariance,
    NoCompliance,
    NoTreatedUnits,
    OneArmEmpty,
    WeakResidualVariation,
)
from ..learners import cross_fit_predict
from .engine import DmlResult, linear_score_result

DEFAULT_TRIM = 0.01
WEAK_VARIATION_RTOL = 1e-10


def _columns(X, n) -> np.ndarray:
    if X is None:
        return np.empty((n, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != n:
        raise DimensionMismatch("covariate row count mismatch")
    return X


def _check_binary(v, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isin(v, (0.0, 1.0))):
        raise DimensionMismatch(f"{name} must be binary 0/1")
    return v


def _rmse(target, pred) -> float:
    return float(np.sqrt(np.mean((np.asarray(target) - pred) ** 2)))


def dml_plm(y, d, X, learner_l, learner_m, plan, alpha: float = 0.05) -> DmlResult:
    """Partially linear model: residual-on-residual slope with
    cross-fitted conditional means of Y and D given X."""
    y = np.asarray(y, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    X = _columns(X, y.size)
    ell_hat, _ = cross_fit_predict(learner_l, X, y, plan)
    m_hat, _ = cross_fit_predict(learner_m, X, d, plan)
    ry = y - ell_hat
    rd = d - m_hat
    if float(np.mean(rd**2)) < WEAK_VARIATION_RTOL * float(np.mean(d**2)):
        raise WeakResidualVariation("treatment residual variation is degenerate")
    return linear_score_result(
        psi_a=rd * rd,
        psi_b=rd * ry,
        alpha=alpha,
        diagnostics={"rmse_y": _rmse(y, ell_hat), "rmse_d": _rmse(d, m_hat)},
    )


def _fit_irm_nuisances(y, d, X, learner_g, learner_m, plan, trim):
    """Cross-fit g(d, X) by treatment arm and the clipped propensity."""
    n = y.size
    g1 = np.empty(n)
    g0 = np.empty(n)
    m = np.empty(n)
    for k in range(plan.K):
        test = plan.fold_indices(k)
        train = plan.complement_indices(k)
        treated = train[d[train] == 1.0]
        control = train[d[train] == 0.0]
        if treated.size == 0 or control.size == 0:
            raise OneArmEmpty(f"training data for fold {k} lacks a treatment arm")
        p1 = learner_g.fit(X[treated], y[treated])
        p0 = learner_g.fit(X[control], y[control])
        pm = learner_m.fit(X[train], d[train])
        g1[test] = p1.predict(X[test])
        g0[test] = p0.predict(X[test])
        m[test] = pm.predict(X[test])
    trimmed = int(np.sum((m < trim) | (m > 1.0 - trim)))
    m = np.clip(m, trim, 1.0 - trim)
    return g1, g0, m, trimmed


def irm_signals(y, d, X, learner_g, learner_m, plan,
                trim: float = DEFAULT_TRIM):
    """Per-observation doubly robust ATE signals
    g(1,X) - g(0,X) + H (Y - g(D,X)) and the trim count."""
    y = np.asarray(y, dtype=float).ravel()
    d = _check_binary(d, "treatment")
    X = _columns(X, y.size)
    if not (np.any(d == 1) and np.any(d == 0)):
        raise OneArmEmpty("both treatment arms must be present")
    g1, g0, m, trimmed = _fit_irm_nuisances(y, d, X, learner_g, learner_m,
                                            plan, trim)
    H = d / m - (1.0 - d) / (1.0 - m)
    gd = np.where(d == 1.0, g1, g0)
    phi = g1 - g0 + H * (y - gd)
    diag = {
        "rmse_y": _rmse(y, gd),
        "rmse_d": _rmse(d, m),
    }
    return phi, trimmed, diag


def dml_irm_ate(y, d, X, learner_g, learner_m, plan,
                trim: float = DEFAULT_TRIM, alpha: float = 0.05) -> DmlResult:
    """Average treatment effect in the interactive regression model."""
    phi, trimmed, diag = irm_signals(y, d, X, learner_g, learner_m, plan, trim)
    return linear_score_result(
        psi_a=np.ones(phi.size), psi_b=phi, alpha=alpha,
        trim_count=trimmed, diagnostics=diag,
    )


def dml_gate(y, d, X, groups, learner_g, learner_m, plan,
             trim: float = DEFAULT_TRIM, alpha: float = 0.05) -> DmlResult:
    """Group average treatment effects from shared IRM signals.

    ``groups`` is an (n,) integer label array; one estimate per distinct
    label. Each GATE is the group mean of the ATE signal, so GATEs
    weighted by group shares reproduce the ATE exactly.
    """
    phi, trimmed, diag = irm_signals(y, d, X, learner_g, learner_m, plan, trim)
    groups = np.asarray(groups).ravel()
    labels = np.unique(groups)
    n = phi.size
    q = labels.size
    estimates = np.empty(q)
    variances = np.empty(q)
    influence = np.zeros((n, q))
    degenerate = []
    for j, lab in enumerate(labels):
        mask = groups == lab
        share = float(np.mean(mask))
        if share == 0.0:
            raise EmptyGroup(f"group {lab!r} is empty")
        theta_g = float(np.mean(phi[mask]))
        estimates[j] = theta_g
        influence[mask, j] = (phi[mask] - theta_g) / share
        variances[j] = float(np.mean(influence[:, j] ** 2))
        if np.sum(mask) < 2:
            degenerate.append(lab)
            variances[j] = np.nan
    se = np.sqrt(variances / n)
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    diag = dict(diag)
    diag["group_labels"] = labels
    if degenerate:
        diag["degenerate_groups"] = degenerate
    return DmlResult(
        estimates=estimates,
        std_errors=se,
        ci_lower=estimates - z * se,
        ci_upper=estimates + z * se,
        influence=influence,
        variance=variances,
        alpha=alpha,
        n=n,
        trim_count=trimmed,
        diagnostics=diag,
    )


def dml_atet(y, d, X, learner_g0, learner_m, plan,
             trim: float = DEFAULT_TRIM, alpha: float = 0.05) -> DmlResult:
    """Average treatment effect on the treated.

    Uses the bounded composite weight D - (1-D) m(X)/(1-m(X)), so only
    the control-arm outcome regression g(0, X) is required.
    """
    y = np.asarray(y, dtype=float).ravel()
    d = _check_binary(d, "treatment")
    X = _columns(X, y.size)
    if not np.any(d == 1):
        raise NoTreatedUnits("no treated observations")
    n = y.size
    g0 = np.empty(n)
    m = np.empty(n)
    for k in range(plan.K):
        test = plan.fold_indices(k)
        train = plan.complement_indices(k)
        control = train[d[train] == 0.0]
        if control.size == 0:
            raise OneArmEmpty(f"training data for fold {k} has no controls")
        g0[test] = learner_g0.fit(X[control], y[control]).predict(X[test])
        m[test] = learner_m.fit(X[train], d[train]).predict(X[test])
    trimmed = int(np.sum(m > 1.0 - trim))
    m = np.clip(m, trim, 1.0 - trim)
    hm = d - (1.0 - d) * m / (1.0 - m)
    return linear_score_result(
        psi_a=d,
        psi_b=hm * (y - g0),
        alpha=alpha,
        trim_count=trimmed,
        diagnostics={"rmse_y0": _rmse(y[d == 0], g0[d == 0]),
                     "rmse_d": _rmse(d, m)},
    )


def dml_pliv(y, d, z, X, learner_l, learner_r, learner_m, plan,
             alpha: float = 0.05) -> DmlResult:
    """Partially linear IV: residualized two-stage least squares.

    learner_l predicts Y from X, learner_r predicts the instrument Z,
    and learner_m predicts the treatment D.
    """
    y = np.asarray(y, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    X = _columns(X, y.size)
    ell_hat, _ = cross_fit_predict(learner_l, X, y, plan)
    r_hat, _ = cross_fit_predict(learner_r, X, z, plan)
    m_hat, _ = cross_fit_predict(learner_m, X, d, plan)
    ry, rz, rd = y - ell_hat, z - r_hat, d - m_hat
    cov_dz = float(np.mean(rd * rz))
    if cov_dz == 0.0:
        raise ExactlyZeroCovariance("instrument orthogonal to treatment residual")
    scale = float(np.sqrt(np.mean(rd**2) * np.mean(rz**2)))
    diag = {
        "rmse_y": _rmse(y, ell_hat),
        "rmse_z": _rmse(z, r_hat),
        "rmse_d": _rmse(d, m_hat),
        "weak_instrument": bool(scale > 0 and abs(cov_dz) < 0.01 * scale),
    }
    return linear_score_result(psi_a=rd * rz, psi_b=ry * rz, alpha=alpha,
                               diagnostics=diag)


def dml_late(y, d, z, X, learner_mu, learner_m, learner_p, plan,
             trim: float = DEFAULT_TRIM, alpha: float = 0.05) -> DmlResult:
    """Local average treatment effect with a binary instrument.

    Ratio of two doubly robust signals: the instrument's effect on the
    outcome over its effect on treatment take-up.
    """
    y = np.asarray(y, dtype=float).ravel()
    d = _check_binary(d, "treatment")
    z = _check_binary(z, "instrument")
    X = _columns(X, y.size)
    if not (np.any(z == 1) and np.any(z == 0)):
        raise OneArmEmpty("both instrument arms must be present")
    n = y.size
    mu1 = np.empty(n)
    mu0 = np.empty(n)
    m1 = np.empty(n)
    m0 = np.empty(n)
    p = np.empty(n)
    for k in range(plan.K):
        test = plan.fold_indices(k)
        train = plan.complement_indices(k)
        on = train[z[train] == 1.0]
        off = train[z[train] == 0.0]
        if on.size == 0 or off.size == 0:
            raise OneArmEmpty(f"training data for fold {k} lacks an instrument arm")
        mu1[test] = learner_mu.fit(X[on], y[on]).predict(X[test])
        mu0[test] = learner_mu.fit(X[off], y[off]).predict(X[test])
        m1[test] = learner_m.fit(X[on], d[on]).predict(X[test])
        m0[test] = learner_m.fit(X[off], d[off]).predict(X[test])
        p[test] = learner_p.fit(X[train], z[train]).predict(X[test])
    trimmed = int(np.sum((p < trim) | (p > 1.0 - trim)))
    p = np.clip(p, trim, 1.0 - trim)
    m1 = np.clip(m1, 0.0, 1.0)
    m0 = np.clip(m0, 0.0, 1.0)
    H = z / p - (1.0 - z) / (1.0 - p)
    mu_z = np.where(z == 1.0, mu1, mu0)
    m_z = np.where(z == 1.0, m1, m0)
    psi_b = mu1 - mu0 + H * (y - mu_z)
    psi_a = m1 - m0 + H * (d - m_z)
    denom = float(np.mean(psi_a))
    if abs(denom) < 1e-10:
        raise NoCompliance("instrument does not move treatment take-up")
    J = float(np.mean(m1 - m0))
    if abs(J) < 1e-10:
        raise NoCompliance("first-stage regression difference is degenerate")
    return linear_score_result(
        psi_a=psi_a,
        psi_b=psi_b,
        alpha=alpha,
        jacobian=J,
        trim_count=trimmed,
        diagnostics={"rmse_y": _rmse(y, mu_z), "rmse_d": _rmse(d, m_z),
                     "rmse_z": _rmse(z, p), "first_stage": denom},
    )
