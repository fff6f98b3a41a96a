"""Difference-in-differences estimators.

Covers the canonical 2x2 four-means estimator and its cross-fitted
doubly robust generalizations for panel data and repeated cross
sections.
"""

from __future__ import annotations

import numpy as np

from ..errors import EmptyCell, NoTreatedUnits, OneArmEmpty
from .engine import DmlResult, linear_score_result
from .estimators import DEFAULT_TRIM, _check_binary, _columns, _rmse


def did_canonical(y, d, t, alpha: float = 0.05) -> DmlResult:
    """Canonical 2x2 difference in differences from four cell means.

    d marks the treated group, t in {1, 2} the period. The standard
    error treats the four cells as independent samples.
    """
    y = np.asarray(y, dtype=float).ravel()
    d = _check_binary(d, "group")
    t = np.asarray(t, dtype=float).ravel()
    if not np.all(np.isin(t, (1.0, 2.0))):
        raise EmptyCell("period indicator must take values 1 and 2")
    n = y.size
    influence = np.zeros(n)
    means = {}
    for dd in (0.0, 1.0):
        for tt in (1.0, 2.0):
            mask = (d == dd) & (t == tt)
            size = int(np.sum(mask))
            if size == 0:
                raise EmptyCell(f"cell (d={int(dd)}, t={int(tt)}) is empty")
            mu = float(np.mean(y[mask]))
            means[(dd, tt)] = mu
            sign = 1.0 if (tt == 2.0) == (dd == 1.0) else -1.0
            influence[mask] = sign * (y[mask] - mu) * n / size
    estimate = (means[(1.0, 2.0)] - means[(1.0, 1.0)]) - (
        means[(0.0, 2.0)] - means[(0.0, 1.0)]
    )
    psi_a = np.ones(n)
    psi_b = influence + estimate
    out = linear_score_result(psi_a, psi_b, alpha=alpha,
                              diagnostics={"cell_means": means})
    return out


def dml_did_panel(y1, y2, d, X, learner_g, learner_m, plan,
                  trim: float = DEFAULT_TRIM, alpha: float = 0.05) -> DmlResult:
    """ATET for panel data via the doubly robust score on outcome
    differences: learner_g models E[Y2 - Y1 | X] among controls and
    learner_m the treatment propensity."""
    y1 = np.asarray(y1, dtype=float).ravel()
    y2 = np.asarray(y2, dtype=float).ravel()
    d = _check_binary(d, "treatment")
    dy = y2 - y1
    X = _columns(X, dy.size)
    if not np.any(d == 1):
        raise NoTreatedUnits("no treated units")
    n = dy.size
    p_hat = float(np.mean(d))
    g0 = np.empty(n)
    m = np.empty(n)
    for k in range(plan.K):
        test = plan.fold_indices(k)
        train = plan.complement_indices(k)
        control = train[d[train] == 0.0]
        if control.size == 0:
            raise OneArmEmpty(f"training data for fold {k} has no controls")
        g0[test] = learner_g.fit(X[control], dy[control]).predict(X[test])
        m[test] = learner_m.fit(X[train], d[train]).predict(X[test])
    trimmed = int(np.sum(m > 1.0 - trim))
    m = np.clip(m, trim, 1.0 - trim)
    psi_b = (d - m) / (p_hat * (1.0 - m)) * (dy - g0)
    return linear_score_result(
        psi_a=d / p_hat,
        psi_b=psi_b,
        alpha=alpha,
        trim_count=trimmed,
        diagnostics={"rmse_dy0": _rmse(dy[d == 0], g0[d == 0]),
                     "rmse_d": _rmse(d, m)},
    )


def dml_did_rcs(y, t, d, X, learner_g, learner_m, plan,
                trim: float = DEFAULT_TRIM, alpha: float = 0.05) -> DmlResult:
    """ATET for repeated cross sections.

    Nuisances: treated share p, post-period share lambda, propensity
    m(X), and per-cell outcome regressions g(d, t, X). The score
    reweights each (d, t) cell and subtracts the model-based trend among
    the treated.
    """
    y = np.asarray(y, dtype=float).ravel()
    d = _check_binary(d, "treatment")
    t = np.asarray(t, dtype=float).ravel()
    if not np.all(np.isin(t, (1.0, 2.0))):
        raise EmptyCell("period indicator must take values 1 and 2")
    post = (t == 2.0).astype(float)
    X = _columns(X, y.size)
    n = y.size
    p_hat = float(np.mean(d))
    lam = float(np.mean(post))
    if p_hat == 0.0:
        raise NoTreatedUnits("no treated observations")
    if lam in (0.0, 1.0):
        raise EmptyCell("both periods must be present")

    cells = {}
    for dd in (0.0, 1.0):
        for tt in (0.0, 1.0):
            cells[(dd, tt)] = np.flatnonzero((d == dd) & (post == tt))
            if cells[(dd, tt)].size == 0:
                raise EmptyCell(f"cell (d={int(dd)}, t={int(tt) + 1}) is empty")
    degenerate_lambda = any(idx.size < 2 for idx in cells.values())

    g = {key: np.empty(n) for key in cells}
    m = np.empty(n)
    for k in range(plan.K):
        test = plan.fold_indices(k)
        train = plan.complement_indices(k)
        for (dd, tt) in cells:
            rows = train[(d[train] == dd) & (post[train] == tt)]
            if rows.size == 0:
                raise EmptyCell(
                    f"training data for fold {k} lacks cell (d={int(dd)}, t={int(tt) + 1})"
                )
            g[(dd, tt)][test] = learner_g.fit(X[rows], y[rows]).predict(X[test])
        m[test] = learner_m.fit(X[train], d[train]).predict(X[test])
    trimmed = int(np.sum(m > 1.0 - trim))
    m = np.clip(m, trim, 1.0 - trim)

    w = m * (1.0 - d) / (1.0 - m)
    psi_b = (
        d * post / (p_hat * lam) * (y - g[(1.0, 1.0)])
        - d * (1.0 - post) / (p_hat * (1.0 - lam)) * (y - g[(1.0, 0.0)])
        - w * post / (p_hat * lam) * (y - g[(0.0, 1.0)])
        + w * (1.0 - post) / (p_hat * (1.0 - lam)) * (y - g[(0.0, 0.0)])
        + d / p_hat * (g[(1.0, 1.0)] - g[(1.0, 0.0)])
        - d / p_hat * (g[(0.0, 1.0)] - g[(0.0, 0.0)])
    )
    diag = {"p_hat": p_hat, "lambda_hat": lam, "rmse_d": _rmse(d, m)}
    if degenerate_lambda:
        diag["degenerate_lambda"] = True
    return linear_score_result(
        psi_a=d / p_hat,
        psi_b=psi_b,
        alpha=alpha,
        trim_count=trimmed,
        diagnostics=diag,
    )
