"""Scoring, comparison, and ensembling of CATE models against doubly
robust signals from a held-out scoring sample."""

from __future__ import annotations

import numpy as np
from scipy import stats

from ..errors import DimensionMismatch, IndistinguishableModels
from .meta import CateModel

QAGG_MAX_ITERS = 5000
QAGG_GRAD_TOL = 1e-9
DISTINGUISH_TOL = 1e-12


def _as_values(model, signals, X):
    if callable(model):
        if X is None:
            raise DimensionMismatch("covariates required to evaluate a model")
        return np.asarray(model(X), dtype=float).ravel()
    return np.asarray(model, dtype=float).ravel()


def dr_loss(tau_values, signals) -> float:
    """L(tau) = E_n[(signal - tau(X))^2]."""
    signals = np.asarray(signals, dtype=float).ravel()
    tau_values = np.asarray(tau_values, dtype=float).ravel()
    return float(np.mean((signals - tau_values) ** 2))


def dr_score(tau_values, signals, train_ate: float | None = None) -> dict:
    """Loss plus the normalized improvement over a constant-ATE model.

    ``train_ate`` is the constant fitted on training data; it defaults
    to the scoring-sample mean, which makes the score of the constant
    model itself exactly zero.
    """
    signals = np.asarray(signals, dtype=float).ravel()
    const = float(np.mean(signals)) if train_ate is None else float(train_ate)
    loss = dr_loss(tau_values, signals)
    base = dr_loss(np.full(signals.size, const), signals)
    score = (base - loss) / base if base > 0 else 0.0
    return {"loss": loss, "baseline_loss": base, "score": score}


def compare_models(tau_i, tau_j, signals, alpha: float = 0.05,
                   X=None) -> dict:
    """Difference in DR loss between two models with a normal CI.

    The variance comes from the per-observation loss differences, so
    shared noise in the signals cancels.
    """
    signals = np.asarray(signals, dtype=float).ravel()
    ti = _as_values(tau_i, signals, X)
    tj = _as_values(tau_j, signals, X)
    if float(np.mean((ti - tj) ** 2)) <= DISTINGUISH_TOL:
        raise IndistinguishableModels("models coincide on the scoring data")
    delta_obs = (signals - ti) ** 2 - (signals - tj) ** 2
    delta = float(np.mean(delta_obs))
    variance = float(np.mean((delta_obs - delta) ** 2))
    se = float(np.sqrt(variance / signals.size))
    z = stats.norm.ppf(1.0 - alpha / 2.0)
    return {"delta": delta, "se": se, "variance": variance,
            "ci": (delta - z * se, delta + z * se)}


def _project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w : w >= 0, sum w = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho = np.flatnonzero(u - css / (np.arange(v.size) + 1) > 0)[-1]
    theta = css[rho] / (rho + 1.0)
    return np.clip(v - theta, 0.0, None)


def _simplex_quadratic(P, s, linear) -> np.ndarray:
    """Minimize mean((s - P w)^2) + linear' w over the simplex by
    projected gradient with a fixed 1/L step and uniform start."""
    n, M = P.shape
    G = P.T @ P / n
    b = P.T @ s / n
    L = 2.0 * float(np.linalg.eigvalsh(G).max()) or 1.0
    w = np.full(M, 1.0 / M)
    for _ in range(QAGG_MAX_ITERS):
        grad = 2.0 * (G @ w - b) + linear
        w_new = _project_simplex(w - grad / L)
        if np.linalg.norm(w_new - w) * L <= QAGG_GRAD_TOL:
            w = w_new
            break
        w = w_new
    return w


def ensemble(predictions, signals, method: str = "qagg",
             models: list[CateModel] | None = None,
             fix_intercept_to: float | None = None) -> dict:
    """Combine candidate CATE models scored on held-out signals.

    ``predictions`` is (n, M) with one column per candidate. Methods:
    "best" keeps the single lowest-loss model (ties to the lowest
    index), "convex" finds the simplex weights minimizing the DR loss of
    the mixture, and "qagg" additionally penalizes each model by its own
    loss, which interpolates between the two.

    ``fix_intercept_to`` recenters the combined model to a caller-
    supplied ATE estimate.
    """
    P = np.asarray(predictions, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    s = np.asarray(signals, dtype=float).ravel()
    n, M = P.shape
    if M < 1:
        raise DimensionMismatch("need at least one model")
    losses = np.array([dr_loss(P[:, j], s) for j in range(M)])

    if method == "best":
        weights = np.zeros(M)
        weights[int(np.argmin(losses))] = 1.0
    elif method == "convex":
        weights = _simplex_quadratic(P, s, np.zeros(M))
    elif method == "qagg":
        weights = _simplex_quadratic(P, s, losses)
    else:
        raise ValueError(f"unknown ensemble method {method!r}")

    combined = P @ weights
    offset = 0.0
    if fix_intercept_to is not None:
        offset = float(fix_intercept_to) - float(np.mean(combined))
        combined = combined + offset

    out = {"weights": weights, "losses": losses, "combined": combined,
           "offset": offset}
    if models is not None:
        predictor = _WeightedPredictor(models, weights, offset)
        out["model"] = CateModel(kind="ensemble", predictor=predictor,
                                 metadata={"weights": weights})
    return out


class _WeightedPredictor:
    def __init__(self, models, weights, offset):
        self._models = models
        self._weights = weights
        self._offset = offset

    def predict(self, X):
        acc = 0.0
        for w, m in zip(self._weights, self._models):
            acc = acc + w * np.asarray(m.predict(X), dtype=float)
        return acc + self._offset
