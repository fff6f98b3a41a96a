"""Meta-learner strategies for conditional average treatment effects.

Each strategy composes regression oracles into a CATE model: S and T
rely purely on outcome modelling, X and its domain-adapted variant DAX
reweight effect regressions by the propensity, DR regresses doubly
robust signals, and R minimizes the residual-on-residual loss. First
stage nuisances are cross-fitted; the final effect regression uses all
rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..dml.estimators import DEFAULT_TRIM, _check_binary, _columns
from ..errors import OneArmEmpty, WeightOverflow
from ..learners import cross_fit_predict
from .signals import dr_signal

META_KINDS = ("S", "T", "X", "DAX", "DR", "R")


@dataclass
class CateModel:
    kind: str
    predictor: object
    metadata: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out = np.asarray(self.predictor.predict(X), dtype=float)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("CATE model produced non-finite values")
        return out

    def __call__(self, X) -> np.ndarray:
        return self.predict(X)


def _arm_crossfit(Z, y, d, learner, plan, arm: float) -> np.ndarray:
    """Cross-fitted predictions of a model trained only on one arm."""
    out = np.empty(y.size)
    for k in range(plan.K):
        test = plan.fold_indices(k)
        train = plan.complement_indices(k)
        rows = train[d[train] == arm]
        if rows.size == 0:
            raise OneArmEmpty(f"training data for fold {k} lacks arm {arm:g}")
        out[test] = learner.fit(Z[rows], y[rows]).predict(Z[test])
    return out


def meta_learn(kind: str, y, d, Z, learner_y, learner_prop, learner_final,
               plan, X_effect=None, trim: float = DEFAULT_TRIM) -> CateModel:
    """Fit a CATE model of the requested kind.

    learner_y models outcomes, learner_prop the propensity, and
    learner_final carries out the last-stage effect regression on
    ``X_effect`` (defaults to Z).
    """
    kind = kind.upper()
    if kind not in META_KINDS:
        raise ValueError(f"unknown meta-learner kind {kind!r}")
    y = np.asarray(y, dtype=float).ravel()
    d = _check_binary(d, "treatment")
    Z = _columns(Z, y.size)
    X = Z if X_effect is None else _columns(X_effect, y.size)
    if not (np.any(d == 1) and np.any(d == 0)):
        raise OneArmEmpty("both arms must be present")
    meta: dict = {}

    if kind == "S":
        ZD = np.column_stack([d, Z])
        labels = np.empty(y.size)
        for k in range(plan.K):
            test = plan.fold_indices(k)
            train = plan.complement_indices(k)
            g = learner_y.fit(ZD[train], y[train])
            one = np.column_stack([np.ones(test.size), Z[test]])
            zero = np.column_stack([np.zeros(test.size), Z[test]])
            labels[test] = g.predict(one) - g.predict(zero)
    elif kind == "T":
        g1 = _arm_crossfit(Z, y, d, learner_y, plan, 1.0)
        g0 = _arm_crossfit(Z, y, d, learner_y, plan, 0.0)
        labels = g1 - g0
    elif kind in ("X", "DAX"):
        g1 = _arm_crossfit(Z, y, d, learner_y, plan, 1.0)
        g0 = _arm_crossfit(Z, y, d, learner_y, plan, 0.0)
        mu, _ = cross_fit_predict(learner_prop, Z, d, plan)
        mu = np.clip(mu, trim, 1.0 - trim)
        treated = d == 1.0
        control = ~treated
        # Effect regressions: on the treated the control response is
        # imputed, and vice versa.
        if kind == "DAX":
            w_t = (1.0 - mu[treated]) ** 2 / mu[treated]
            w_c = mu[control] ** 2 / (1.0 - mu[control])
        else:
            w_t = None
            w_c = None
        delta_t = learner_final.fit(Z[treated], (y - g0)[treated], weights=w_t)
        delta_c = learner_final.fit(Z[control], (g1 - y)[control], weights=w_c)
        labels = (delta_t.predict(Z) * (1.0 - mu)
                  + delta_c.predict(Z) * mu)
        meta["propensity"] = mu
    elif kind == "DR":
        sig = dr_signal(y, d, Z, learner_y, learner_prop, plan, trim=trim)
        labels = sig.values
        meta["trim_count"] = sig.trim_count
    else:  # R
        h_hat, _ = cross_fit_predict(learner_y, Z, y, plan)
        mu, _ = cross_fit_predict(learner_prop, Z, d, plan)
        ry = y - h_hat
        rd = d - mu
        weights = rd**2
        if float(np.max(weights, initial=0.0)) < 1e-12:
            raise WeightOverflow("residualized treatment carries no weight")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rd != 0.0, ry / np.where(rd == 0.0, 1.0, rd), 0.0)
        predictor = learner_final.fit(X, ratio, weights=weights)
        return CateModel(kind=kind, predictor=predictor, metadata=meta)

    predictor = learner_final.fit(X, labels)
    return CateModel(kind=kind, predictor=predictor, metadata=meta)
