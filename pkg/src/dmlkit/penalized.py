"""Penalized linear regression.

Lasso solved by coordinate descent with the theoretically justified
plug-in penalty, plus Post-Lasso refitting, Ridge, Elastic Net, and
K-fold cross-validation for tuning. The working objective is

    sum_i (y_i - a - b'x_i)^2 + lam_ridge * sum_j b_j^2
                              + lam * sum_j psi_j |b_j|

with the intercept handled by demeaning and never penalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import (
    DimensionMismatch,
    FoldTooSmall,
    NoConvergence,
    NonFinitePenalty,
)
from .linalg import OlsFit, ols_fit

MAX_SWEEPS = 10_000
COORD_TOL = 1e-7
KKT_TOL = 1e-6


@dataclass
class LassoFit:
    coefficients: np.ndarray
    intercept: float
    lam: float
    lam_ridge: float
    loadings: np.ndarray
    sigma_hat: float | None
    n_sweeps: int
    kkt_gap: float
    degenerate_columns: list[int] = field(default_factory=list)

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return self.intercept + X @ self.coefficients


@dataclass
class CvReport:
    grid: list
    fold_mses: np.ndarray  # (len(grid), K)
    cv_mse: np.ndarray
    selected_index: int
    selected_parameter: object
    refit: object


def _prepare(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.size:
        raise DimensionMismatch("X and y have different row counts")
    return X, y


def _coordinate_descent(Xc, yc, lam, lam_ridge, loadings, beta0=None):
    """Minimize sum (yc - Xc b)^2 + lam_ridge ||b||^2 + lam sum psi_j |b_j|.

    Exact coordinate minimization with running residuals; the objective is
    non-increasing across sweeps by construction (asserted below). Stops
    when both the coefficient updates and the KKT stationarity gap are
    small relative to the problem scale, or when the objective has
    stalled with a certified KKT gap (flat directions of an
    underdetermined design can keep coefficients drifting without
    changing the fit). ``beta0`` warm-starts the solve.
    """
    n, p = Xc.shape
    beta = np.zeros(p) if beta0 is None else beta0.astype(float).copy()
    colsq = np.einsum("ij,ij->j", Xc, Xc)
    live = np.flatnonzero(colsq > 0)
    beta[colsq == 0] = 0.0
    r = yc - Xc @ beta if beta.any() else yc.copy()
    thresholds = 0.5 * lam * loadings
    denom = colsq + lam_ridge
    gap_scale = max(1.0, lam * float(loadings.max(initial=0.0)),
                    2.0 * float(np.abs(Xc.T @ yc).max(initial=0.0)))

    def objective(b):
        return float(r @ r) + lam_ridge * float(b @ b) + lam * float(
            loadings @ np.abs(b)
        )

    prev_obj = objective(beta)
    sweeps = 0
    for sweeps in range(1, MAX_SWEEPS + 1):
        max_change = 0.0
        for j in live:
            bj = beta[j]
            rho = Xc[:, j] @ r + colsq[j] * bj
            new = np.sign(rho) * max(abs(rho) - thresholds[j], 0.0) / denom[j]
            if new != bj:
                r += Xc[:, j] * (bj - new)
                beta[j] = new
                max_change = max(max_change, abs(new - bj))
        obj = objective(beta)
        if not np.isfinite(obj):
            raise NoConvergence("objective diverged")
        assert obj <= prev_obj + 1e-9 * (1.0 + abs(prev_obj)), (
            "coordinate descent objective increased"
        )
        stalled = obj > prev_obj - 1e-12 * (1.0 + abs(prev_obj))
        prev_obj = obj
        if max_change < COORD_TOL or stalled:
            gap = _kkt_gap(Xc, yc, beta, lam, lam_ridge, loadings)
            if gap <= KKT_TOL * gap_scale:
                break
    else:  # pragma: no cover - convex problems converge quickly
        raise NoConvergence(f"no convergence after {MAX_SWEEPS} sweeps")
    return beta, sweeps


def _kkt_gap(Xc, yc, beta, lam, lam_ridge, loadings):
    """Largest violation of the subgradient stationarity conditions."""
    r = yc - Xc @ beta
    grad = 2.0 * (Xc.T @ r) - 2.0 * lam_ridge * beta
    gap = 0.0
    for j in range(beta.size):
        bound = lam * loadings[j]
        if beta[j] != 0.0:
            gap = max(gap, abs(abs(grad[j]) - bound))
            gap = max(gap, abs(grad[j] - np.sign(beta[j]) * bound))
        else:
            gap = max(gap, max(abs(grad[j]) - bound, 0.0))
    return gap


def lasso_fit(X, y, lam, loadings=None, lam_ridge: float = 0.0,
              weights=None, _warm_start=None) -> LassoFit:
    """Lasso (optionally Elastic Net via lam_ridge > 0) with unpenalized
    intercept.

    Default penalty loadings are psi_j = sqrt(E_n[x_j^2]) computed on the
    centered columns, which makes predictions invariant to column
    rescaling. Constant columns get loading zero, stay at coefficient
    zero, and are reported in ``degenerate_columns``.
    """
    X, y = _prepare(X, y)
    n, p = X.shape
    if not np.isfinite(lam) or lam < 0 or not np.isfinite(lam_ridge) or lam_ridge < 0:
        raise NonFinitePenalty("penalty levels must be finite and nonnegative")
    if weights is not None:
        w = np.asarray(weights, dtype=float).ravel()
        sw = np.sqrt(w / np.mean(w))
    else:
        sw = None

    xbar = X.mean(axis=0)
    ybar = float(y.mean())
    Xc = X - xbar
    yc = y - ybar
    if sw is not None:
        # Weighted problem: reweight after weighted demeaning.
        wn = (sw**2) / np.sum(sw**2)
        xbar = X.T @ wn
        ybar = float(y @ wn)
        Xc = (X - xbar) * sw[:, None]
        yc = (y - ybar) * sw

    scale = np.sqrt(np.mean(Xc**2, axis=0))
    degenerate = list(np.flatnonzero(scale == 0.0))
    safe = np.where(scale > 0, scale, 1.0)
    Xs = Xc / safe

    if loadings is None:
        psi = np.where(scale > 0, 1.0, 0.0)  # sqrt(E_n[x_j^2]) after scaling
        psi_orig = scale.copy()
    else:
        psi_orig = np.asarray(loadings, dtype=float).ravel()
        if psi_orig.size != p:
            raise DimensionMismatch("loadings length mismatch")
        if np.any(psi_orig < 0) or not np.all(np.isfinite(psi_orig)):
            raise NonFinitePenalty("loadings must be finite and nonnegative")
        # In the standardized parametrization b_s = b * scale, so the
        # penalty lam * psi_j |b_j| becomes lam * (psi_j / scale) |b_s|.
        psi = np.where(scale > 0, psi_orig / safe, 0.0)

    if lam == 0.0 or not np.any(psi > 0):
        # No l1 part: the problem is (possibly ridge-regularized) least
        # squares with an exact solution, so skip coordinate descent.
        A = Xs.T @ Xs + lam_ridge * np.eye(p)
        beta_s = np.linalg.lstsq(A, Xs.T @ yc, rcond=None)[0] if p else np.empty(0)
        sweeps = 0
    else:
        beta_s, sweeps = _coordinate_descent(Xs, yc, lam, lam_ridge, psi,
                                             beta0=_warm_start)
    beta = np.where(scale > 0, beta_s / safe, 0.0)
    intercept = ybar - float(beta @ xbar)
    gap = _kkt_gap(Xs, yc, beta_s, lam, lam_ridge, psi)
    fit = LassoFit(
        coefficients=beta,
        intercept=intercept,
        lam=lam,
        lam_ridge=lam_ridge,
        loadings=psi_orig,
        sigma_hat=None,
        n_sweeps=sweeps,
        kkt_gap=gap,
        degenerate_columns=degenerate,
    )
    fit._standardized_coefficients = beta_s
    return fit


def lasso_path(X, y, lams, weights=None) -> list[LassoFit]:
    """Lasso fits along a penalty path with warm starts.

    Penalties are visited from largest to smallest, each solve starting
    from the previous solution; results are returned in the order of
    ``lams``. Each fit satisfies the same KKT certificate as a cold
    ``lasso_fit`` call.
    """
    lams = [float(l) for l in lams]
    order = sorted(range(len(lams)), key=lambda i: -lams[i])
    fits: list = [None] * len(lams)
    warm = None
    prev_lam = None
    prev_fit = None
    for i in order:
        if prev_lam is not None and lams[i] == prev_lam:
            fits[i] = prev_fit  # duplicated penalty: identical solution
            continue
        fit = lasso_fit(X, y, lam=lams[i], weights=weights,
                        _warm_start=warm)
        warm = fit._standardized_coefficients
        fits[i] = fit
        prev_lam, prev_fit = lams[i], fit
    return fits


def plugin_lambda(X, y, c: float = 1.1, a: float = 0.05,
                  sigma_iters: int = 1,
                  heteroskedastic: bool = False) -> dict:
    """Plug-in penalty level lambda = 2 c sigma_hat sqrt(n) z_{1-a/(2p)}.

    sigma_hat starts at the intercept-only residual standard deviation and
    is refined by refitting the Lasso ``sigma_iters`` times (one pass is
    the recommended default). With ``heteroskedastic=True`` the function
    instead returns per-coefficient loadings sqrt(E_n[eps^2 x_j^2]) and
    sigma_hat = 1 in the lambda formula.
    """
    X, y = _prepare(X, y)
    n, p = X.shape
    if n < 2 or p < 1:
        raise DimensionMismatch("plugin_lambda needs n >= 2 and p >= 1")
    z = stats.norm.ppf(1.0 - a / (2.0 * p))
    Xc = X - X.mean(axis=0)
    if heteroskedastic:
        lam = 2.0 * c * np.sqrt(n) * z
        resid = y - y.mean()  # intercept-only start, as for sigma
        loadings = np.sqrt(np.mean(resid[:, None] ** 2 * Xc**2, axis=0))
        for _ in range(max(sigma_iters, 0)):
            fit = lasso_fit(X, y, lam=lam, loadings=loadings)
            resid = y - fit.predict(X)
            loadings = np.sqrt(np.mean(resid[:, None] ** 2 * Xc**2, axis=0))
        return {"lam": lam, "sigma_hat": 1.0, "loadings": loadings, "z": z}

    sigma = float(np.std(y))  # intercept-only residual sd
    for _ in range(max(sigma_iters, 0)):
        if sigma == 0.0:
            break
        fit = lasso_fit(X, y, lam=2.0 * c * sigma * np.sqrt(n) * z)
        sigma = float(np.sqrt(np.mean((y - fit.predict(X)) ** 2)))
    lam = 2.0 * c * sigma * np.sqrt(n) * z
    return {"lam": lam, "sigma_hat": sigma, "z": z}


def lasso_plugin(X, y, c: float = 1.1, a: float = 0.05,
                 sigma_iters: int = 1) -> LassoFit:
    """Lasso with the plug-in penalty; convenience wrapper."""
    rule = plugin_lambda(X, y, c=c, a=a, sigma_iters=sigma_iters)
    fit = lasso_fit(X, y, lam=rule["lam"])
    fit.sigma_hat = rule["sigma_hat"]
    return fit


def post_lasso(X, y, fit: LassoFit, weights=None) -> OlsFit:
    """OLS refit on the Lasso active set (plus intercept).

    Coefficients outside the active set are zero; the returned fit's
    design is (1, X[active]).
    """
    X, y = _prepare(X, y)
    active = fit.active_set
    design = np.column_stack([np.ones(X.shape[0]), X[:, active]])
    return ols_fit(design, y, weights=weights)


def post_lasso_coefficients(X, y, fit: LassoFit) -> tuple[float, np.ndarray]:
    """Post-Lasso intercept and full-length coefficient vector."""
    X, y = _prepare(X, y)
    refit = post_lasso(X, y, fit)
    beta = np.zeros(X.shape[1])
    beta[fit.active_set] = refit.coefficients[1:]
    return float(refit.coefficients[0]), beta


def ridge_fit(X, y, lam: float) -> LassoFit:
    """Ridge regression with unpenalized intercept.

    Closed form (X'X + lam I)^{-1} X'y on the standardized centered
    columns, back-transformed to the original scale.
    """
    X, y = _prepare(X, y)
    if not np.isfinite(lam) or lam < 0:
        raise NonFinitePenalty("ridge penalty must be finite and nonnegative")
    xbar = X.mean(axis=0)
    ybar = float(y.mean())
    Xc = X - xbar
    yc = y - ybar
    scale = np.sqrt(np.mean(Xc**2, axis=0))
    safe = np.where(scale > 0, scale, 1.0)
    Xs = Xc / safe
    p = X.shape[1]
    A = Xs.T @ Xs + lam * np.eye(p)
    beta_s = np.linalg.solve(A, Xs.T @ yc) if p else np.empty(0)
    beta = np.where(scale > 0, beta_s / safe, 0.0)
    return LassoFit(
        coefficients=beta,
        intercept=ybar - float(beta @ xbar),
        lam=0.0,
        lam_ridge=lam,
        loadings=np.zeros(p),
        sigma_hat=None,
        n_sweeps=0,
        kkt_gap=0.0,
        degenerate_columns=list(np.flatnonzero(scale == 0.0)),
    )


def elastic_net_fit(X, y, lam_ridge: float, lam_lasso: float) -> LassoFit:
    """Elastic net: squared loss + lam_ridge ||b||^2 + lam_lasso ||b||_1."""
    X, y = _prepare(X, y)
    p = X.shape[1]
    return lasso_fit(X, y, lam=lam_lasso, loadings=np.ones(p),
                     lam_ridge=lam_ridge)


def cv_fit(method: str, X, y, grid, plan, fitter=None) -> CvReport:
    """K-fold cross-validation over a parameter grid.

    For each grid point the model is trained on K-1 folds and scored on
    the held-out fold; the CV MSE is the plain mean of fold MSEs. Ties
    break to the smallest grid index and the winner is refit on the full
    data.
    """
    X, y = _prepare(X, y)
    grid = list(grid)
    if not grid:
        raise DimensionMismatch("grid must be nonempty")
    pathwise = method == "lasso" and fitter is None
    if fitter is None:
        if method == "lasso":
            fitter = lambda X, y, lam: lasso_fit(X, y, lam=lam)
        elif method == "ridge":
            fitter = lambda X, y, lam: ridge_fit(X, y, lam)
        elif method == "elastic_net":
            fitter = lambda X, y, lams: elastic_net_fit(X, y, *lams)
        else:
            raise ValueError(f"unknown method {method!r}")

    K = plan.K
    fold_mses = np.empty((len(grid), K))
    for k in range(K):
        test = plan.fold_indices(k)
        train = plan.complement_indices(k)
        if test.size < 2 or train.size < 2:
            raise FoldTooSmall("each fold and its complement need >= 2 rows")
        if pathwise:
            # Warm-started path: same minimizers as per-point cold fits.
            models = lasso_path(X[train], y[train], grid)
        else:
            models = [fitter(X[train], y[train], par) for par in grid]
        for gi, model in enumerate(models):
            pred = model.predict(X[test])
            fold_mses[gi, k] = float(np.mean((y[test] - pred) ** 2))
    cv_mse = fold_mses.mean(axis=1)
    best = int(np.argmin(cv_mse))  # argmin takes the first minimizer
    refit = fitter(X, y, grid[best])
    return CvReport(
        grid=grid,
        fold_mses=fold_mses,
        cv_mse=cv_mse,
        selected_index=best,
        selected_parameter=grid[best],
        refit=refit,
    )
