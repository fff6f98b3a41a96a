"""Dense OLS, robust sandwich variances, and partialling out.

These primitives underpin every estimator in the library: fits are solved
by column-pivoted QR with explicit rank detection, variance estimators
cover the HC0/HC1/HC3 family, and ``partial_out`` implements the
Frisch-Waugh-Lovell residualization used throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import (
    DegreesOfFreedom,
    DimensionMismatch,
    LeverageOne,
    RankDeficient,
)

RANK_RTOL = 1e-10


@dataclass
class OlsFit:
    """Result of a (weighted) least-squares fit."""

    coefficients: np.ndarray
    residuals: np.ndarray
    fitted: np.ndarray
    leverage: np.ndarray
    second_moment: np.ndarray  # E_n[w X X']
    X: np.ndarray
    y: np.ndarray
    weights: np.ndarray
    rank: int

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.coefficients.size

    @property
    def mse_sample(self) -> float:
        w = self.weights
        return float(np.sum(w * self.residuals**2) / np.sum(w))

    @property
    def r2_sample(self) -> float:
        w = self.weights
        total = float(np.sum(w * self.y**2) / np.sum(w))
        if total == 0.0:
            return 0.0
        return 1.0 - self.mse_sample / total

    @property
    def mse_adjusted(self) -> float:
        if self.p >= self.n:
            raise DegreesOfFreedom("adjusted MSE requires p < n")
        return self.n / (self.n - self.p) * self.mse_sample

    @property
    def r2_adjusted(self) -> float:
        w = self.weights
        total = float(np.sum(w * self.y**2) / np.sum(w))
        if total == 0.0:
            return 0.0
        return 1.0 - self.mse_adjusted / total


@dataclass
class VarianceEstimate:
    kind: str
    matrix: np.ndarray  # V_hat / n, the sampling covariance of beta_hat
    std_errors: np.ndarray


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch("design must be a vector or matrix")
    return X


def ols_fit(X, y, weights=None, minimum_norm: bool = False) -> OlsFit:
    """Least squares of y on the columns of X.

    Solved by column-pivoted QR. If X is rank deficient beyond the
    relative tolerance, RankDeficient is raised unless the caller opts
    into the minimum-norm solution.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    if y.size != n:
        raise DimensionMismatch(f"y has length {y.size}, design has {n} rows")
    if n < 1:
        raise DimensionMismatch("need at least one observation")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.size != n:
            raise DimensionMismatch("weights length mismatch")

    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    yw = y * sw

    if p == 0:
        beta = np.empty(0)
        rank = 0
    else:
        Q, R, piv = sla.qr(Xw, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        top = diag[0] if diag.size else 0.0
        rank = int(np.sum(diag > RANK_RTOL * top)) if top > 0 else 0
        if rank < min(n, p) or rank < p:
            if not minimum_norm:
                raise RankDeficient(
                    f"design has numerical rank {rank} < {p} columns"
                )
            beta, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
        else:
            beta = np.zeros(p)
            rhs = Q.T @ yw
            beta[piv] = sla.solve_triangular(R[:rank, :rank], rhs[:rank])

    fitted = X @ beta
    resid = y - fitted
    wsum = np.sum(w)
    second_moment = (Xw.T @ Xw) / wsum if p else np.empty((0, 0))

    # Leverage of row i in the weighted hat matrix.
    if p and rank == p:
        G = np.linalg.solve(X.T @ (X * w[:, None]), (X * w[:, None]).T).T
        leverage = np.sum(X * G, axis=1) * 1.0
    elif p:
        pinv = np.linalg.pinv(Xw.T @ Xw)
        leverage = np.sum((Xw @ pinv) * Xw, axis=1)
    else:
        leverage = np.zeros(n)

    return OlsFit(
        coefficients=beta,
        residuals=resid,
        fitted=fitted,
        leverage=leverage,
        second_moment=second_moment,
        X=X,
        y=y,
        weights=w,
        rank=rank,
    )


def robust_variance(fit: OlsFit, kind: str = "HC1") -> VarianceEstimate:
    """Eicker-Huber-White sandwich variance for an OLS fit.

    HC0 uses raw squared residuals, HC1 rescales by n/(n-p), and HC3
    weights each squared residual by (1 - h_i)^{-2} (jackknife form).
    """
    kind = kind.upper()
    if kind not in ("HC0", "HC1", "HC3"):
        raise ValueError(f"unknown variance kind {kind!r}")
    n, p = fit.n, fit.p
    if kind == "HC3" and np.any(fit.leverage >= 1.0 - 1e-12):
        raise LeverageOne("HC3 undefined when some leverage equals one")

    omega = fit.residuals**2
    if kind == "HC1":
        if n <= p:
            raise DegreesOfFreedom("HC1 requires n > p")
        omega = omega * (n / (n - p))
    elif kind == "HC3":
        omega = omega / (1.0 - fit.leverage) ** 2

    w = fit.weights
    wsum = np.sum(w)
    Xs = fit.X * (w * omega / wsum)[:, None]
    meat = fit.X.T @ Xs  # E_n[w X X' omega eps^2]
    try:
        bread = np.linalg.inv(fit.second_moment)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded upstream
        raise RankDeficient("second-moment matrix singular") from exc
    V = bread @ meat @ bread
    cov = V / n
    return VarianceEstimate(kind=kind, matrix=cov, std_errors=np.sqrt(np.diag(cov)))


def partial_out(V, W, weights=None) -> np.ndarray:
    """Residualize V (vector or columns) on the control matrix W.

    Returns residuals orthogonal in sample to every column of W. With an
    empty W the input is returned unchanged.
    """
    V = np.asarray(V, dtype=float)
    squeeze = V.ndim == 1
    Vm = V[:, None] if squeeze else V
    W = _as_matrix(W) if W is not None else np.empty((Vm.shape[0], 0))
    if W.shape[1] == 0:
        out = Vm.copy()
    else:
        out = np.empty_like(Vm, dtype=float)
        for j in range(Vm.shape[1]):
            fit = ols_fit(W, Vm[:, j], weights=weights)
            out[:, j] = fit.residuals
    return out[:, 0] if squeeze else out


def predictive_metrics(y_true, y_pred, p: int, center: bool = False,
                       train_mean: float | None = None) -> dict:
    """Out-of-sample MSE/R^2 plus degrees-of-freedom adjusted versions.

    R^2 uses the raw uncentered second moment of the outcome by default;
    with ``center=True`` outcomes are demeaned using ``train_mean`` (the
    training-sample mean) before the total second moment is formed.
    """
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.size != y_pred.size:
        raise DimensionMismatch("y_true and y_pred lengths differ")
    n = y_true.size
    y_ref = y_true
    if center:
        mu = float(np.mean(y_true)) if train_mean is None else float(train_mean)
        y_ref = y_true - mu
    mse = float(np.mean((y_true - y_pred) ** 2))
    total = float(np.mean(y_ref**2))
    r2 = 1.0 - mse / total if total > 0 else 0.0
    out = {"mse_test": mse, "r2_test": r2}
    if p >= n:
        raise DegreesOfFreedom("adjusted metrics require p < n")
    mse_adj = n / (n - p) * mse
    out["mse_adjusted"] = mse_adj
    out["r2_adjusted"] = 1.0 - mse_adj / total if total > 0 else 0.0
    return out
