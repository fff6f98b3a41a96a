"""Pluggable regression/classification oracles and cross-fitting.

Everything downstream consumes two contracts: a Learner has
``fit(X, y, weights=None) -> Predictor`` and a Predictor has
``predict(X) -> vector``. Classification learners additionally expose
probabilities clipped away from 0 and 1. Fold planning and the
cross-fitted prediction loop live here as well, together with the
from-scratch tree, bagged forest, boosting, and IRLS logistic oracles.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadFoldCount, DimensionMismatch, FoldTooSmall, Separation
from .linalg import ols_fit
from .rng import stream

DEFAULT_CLIP = 0.01


# ---------------------------------------------------------------------------
# Fold planning


@dataclass(frozen=True)
class CrossFitPlan:
    """Deterministic fold assignment for n rows into K folds."""

    n: int
    K: int
    assignment: np.ndarray  # fold id per row
    seed: int

    def fold_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == k)

    def complement_indices(self, k: int) -> np.ndarray:
        if self.K == 1:
            # Degenerate no-cross-fitting plan (testing ablation only):
            # the "out of fold" data is the full sample.
            return np.arange(self.n)
        return np.flatnonzero(self.assignment != k)


def make_folds(n: int, K: int, seed: int) -> CrossFitPlan:
    """Uniform random partition of {0..n-1} into K folds of near-equal size."""
    if not 2 <= K <= n:
        raise BadFoldCount(f"need 2 <= K <= n, got K={K}, n={n}")
    perm = stream(seed, "folds").permutation(n)
    assignment = np.empty(n, dtype=int)
    sizes = np.full(K, n // K)
    sizes[: n % K] += 1
    start = 0
    for k, size in enumerate(sizes):
        assignment[perm[start:start + size]] = k
        start += size
    return CrossFitPlan(n=n, K=K, assignment=assignment, seed=seed)


def no_crossfit_plan(n: int) -> CrossFitPlan:
    """K=1 ablation plan: nuisances are fit in-sample. Testing only."""
    return CrossFitPlan(n=n, K=1, assignment=np.zeros(n, dtype=int), seed=0)


def cross_fit_predict(learner, X, y, plan: CrossFitPlan, weights=None,
                      proba: bool = False):
    """Out-of-fold predictions: row i is predicted by a model that never
    saw fold(i). Returns (predictions, per-fold predictors)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if plan.n != X.shape[0]:
        raise DimensionMismatch("plan size does not match data")
    preds = np.empty(plan.n)
    predictors = []
    for k in range(plan.K):
        test = plan.fold_indices(k)
        train = plan.complement_indices(k)
        if train.size < 1:
            raise FoldTooSmall(f"fold {k} leaves no training rows")
        w = None if weights is None else np.asarray(weights)[train]
        predictor = learner.fit(X[train], y[train], weights=w)
        predictors.append(predictor)
        if test.size:
            if proba:
                preds[test] = predictor.predict_proba(X[test])
            else:
                preds[test] = predictor.predict(X[test])
    return preds, predictors


def learner_select(candidates, X, y, plan: CrossFitPlan, weights=None) -> dict:
    """Pick the candidate with the smallest cross-fitted MSPE.

    Ties break to the lowest candidate index.
    """
    if not candidates:
        raise DimensionMismatch("need at least one candidate learner")
    y = np.asarray(y, dtype=float).ravel()
    w = None if weights is None else np.asarray(weights, dtype=float).ravel()
    mspes = []
    for cand in candidates:
        preds, _ = cross_fit_predict(cand, X, y, plan, weights=weights)
        if w is None:
            mspes.append(float(np.mean((y - preds) ** 2)))
        else:
            # Score on the same weighted loss the candidates were fit to.
            mspes.append(float(np.sum(w * (y - preds) ** 2) / np.sum(w)))
    mspes = np.asarray(mspes)
    return {"best_index": int(np.argmin(mspes)), "mspe": mspes}


# ---------------------------------------------------------------------------
# Simple oracles


class _FunctionPredictor:
    def __init__(self, fn):
        self._fn = fn

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return np.asarray(self._fn(X), dtype=float)


class FunctionLearner:
    """Wrap a fixed function of X as a Learner (oracle nuisances in tests)."""

    def __init__(self, fn):
        self._fn = fn

    def fit(self, X, y, weights=None):
        return _FunctionPredictor(self._fn)


class ZeroLearner:
    def fit(self, X, y, weights=None):
        return _FunctionPredictor(lambda X: np.zeros(X.shape[0]))


class MeanLearner:
    def fit(self, X, y, weights=None):
        y = np.asarray(y, dtype=float)
        if weights is None:
            mu = float(np.mean(y))
        else:
            w = np.asarray(weights, dtype=float)
            mu = float(np.sum(w * y) / np.sum(w))
        return _FunctionPredictor(lambda X, mu=mu: np.full(X.shape[0], mu))


class LinearLearner:
    """OLS with intercept; the workhorse low-dimensional nuisance oracle."""

    def fit(self, X, y, weights=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        design = np.column_stack([np.ones(X.shape[0]), X])
        fit = ols_fit(design, y, weights=weights, minimum_norm=True)
        beta = fit.coefficients

        def predict(Xn, beta=beta):
            return beta[0] + Xn @ beta[1:]

        return _FunctionPredictor(predict)


class LassoPluginLearner:
    """Plug-in-penalty Lasso, optionally refit by OLS on the active set."""

    def __init__(self, c: float = 1.1, a: float = 0.05, post: bool = False):
        self.c = c
        self.a = a
        self.post = post

    def fit(self, X, y, weights=None):
        from .penalized import lasso_plugin, post_lasso_coefficients

        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        fit = lasso_plugin(X, y, c=self.c, a=self.a)
        if self.post:
            intercept, beta = post_lasso_coefficients(X, y, fit)
        else:
            intercept, beta = fit.intercept, fit.coefficients
        return _FunctionPredictor(lambda Xn: intercept + Xn @ beta)


# ---------------------------------------------------------------------------
# Regression trees


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


class RegressionTree:
    """Greedy binary regression tree with midpoint split candidates.

    Ties in SSE improvement break to the lower feature index, then the
    lower threshold, so fitting is fully deterministic.
    """

    def __init__(self, root: TreeNode, max_depth: int, min_leaf: int):
        self.root = root
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        out = np.empty(X.shape[0])
        idx = np.arange(X.shape[0])
        self._route(self.root, X, idx, out)
        return out

    def _route(self, node: TreeNode, X, idx, out) -> None:
        if node.is_leaf:
            out[idx] = node.value
            return
        mask = X[idx, node.feature] <= node.threshold
        self._route(node.left, X, idx[mask], out)
        self._route(node.right, X, idx[~mask], out)

    def leaves(self) -> list[TreeNode]:
        found, todo = [], [self.root]
        while todo:
            node = todo.pop()
            if node.is_leaf:
                found.append(node)
            else:
                todo.extend([node.left, node.right])
        return found


def _best_split(Xn, yn, wn, features, min_leaf):
    """Best (feature, threshold, gain) on the node's rows, or None."""
    best = None  # (negative_gain_for_compare is implicit; keep explicit gain)
    wy = wn * yn
    wy2 = wn * yn * yn
    total_w = wn.sum()
    total_wy = wy.sum()
    base_sse = wy2.sum() - total_wy**2 / total_w if total_w > 0 else 0.0
    for j in features:
        order = np.argsort(Xn[:, j], kind="stable")
        xs = Xn[order, j]
        boundaries = np.flatnonzero(xs[1:] > xs[:-1]) + 1
        if boundaries.size == 0:
            continue
        cw = np.cumsum(wn[order])
        cwy = np.cumsum(wy[order])
        counts = boundaries
        ok = (counts >= min_leaf) & (xs.size - counts >= min_leaf)
        if not np.any(ok):
            continue
        lw = cw[boundaries - 1]
        lwy = cwy[boundaries - 1]
        rw = total_w - lw
        rwy = total_wy - lwy
        with np.errstate(divide="ignore", invalid="ignore"):
            score = np.where(
                (lw > 0) & (rw > 0), lwy**2 / lw + rwy**2 / rw, -np.inf
            )
        score = np.where(ok, score, -np.inf)
        b = int(np.argmax(score))
        if not np.isfinite(score[b]):
            continue
        gain = float(score[b]) - (total_wy**2 / total_w)
        threshold = 0.5 * (xs[boundaries[b] - 1] + xs[boundaries[b]])
        if best is None or gain > best[2] + 1e-12:
            best = (j, float(threshold), gain)
    if best is None or best[2] <= 1e-12 * (1.0 + base_sse):
        return None
    return best


def tree_fit(X, y, max_depth: int = 3, min_leaf: int = 1, weights=None,
             mtry: int | None = None, rng: np.random.Generator | None = None
             ) -> RegressionTree:
    """Fit a regression tree by recursive best-SSE-improvement splitting."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n, p = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    if min_leaf < 1:
        raise DimensionMismatch("min_leaf must be >= 1")

    def grow(idx: np.ndarray, depth: int) -> TreeNode:
        wn = w[idx]
        yn = y[idx]
        value = float(np.sum(wn * yn) / np.sum(wn)) if np.sum(wn) > 0 else float(np.mean(yn))
        node = TreeNode(value=value)
        if depth >= max_depth or idx.size < 2 * min_leaf:
            return node
        if np.all(yn == yn[0]):
            return node
        if mtry is not None and mtry < p:
            features = np.sort(rng.choice(p, size=mtry, replace=False))
        else:
            features = np.arange(p)
        split = _best_split(X[idx], yn, wn, features, min_leaf)
        if split is None:
            return node
        j, threshold, _ = split
        mask = X[idx, j] <= threshold
        node.feature = j
        node.threshold = threshold
        node.left = grow(idx[mask], depth + 1)
        node.right = grow(idx[~mask], depth + 1)
        return node

    root = grow(np.arange(n), 0)
    return RegressionTree(root, max_depth, min_leaf)


class TreeLearner:
    def __init__(self, max_depth: int = 3, min_leaf: int = 1):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, y, weights=None):
        return tree_fit(X, y, max_depth=self.max_depth,
                        min_leaf=self.min_leaf, weights=weights)


# ---------------------------------------------------------------------------
# Forests and boosting


class _AveragePredictor:
    def __init__(self, trees):
        self._trees = trees

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        acc = np.zeros(X.shape[0])
        for tree in self._trees:
            acc += tree.predict(X)
        return acc / len(self._trees)


def forest_fit(X, y, B: int = 100, sample_mode: str = "bootstrap",
               subsample: int | None = None, mtry: int | None = None,
               max_depth: int = 8, min_leaf: int = 5, seed: int = 0,
               weights=None) -> _AveragePredictor:
    """Bagged (or subsampled) forest of deep trees with per-split feature
    subsampling. Each tree consumes an independent RNG stream derived
    from (seed, tree index), so the result is order-independent."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if B < 1:
        raise DimensionMismatch("forest needs B >= 1 trees")
    trees = []
    for b in range(B):
        rng = stream(seed, "forest-tree", b)
        if sample_mode == "bootstrap":
            idx = rng.integers(0, n, size=n)
        elif sample_mode == "subsample":
            size = subsample if subsample is not None else max(2, n // 2)
            idx = rng.choice(n, size=min(size, n), replace=False)
        elif sample_mode == "full":
            idx = np.arange(n)
        else:
            raise ValueError(f"unknown sample_mode {sample_mode!r}")
        w = None if weights is None else np.asarray(weights)[idx]
        trees.append(
            tree_fit(X[idx], y[idx], max_depth=max_depth, min_leaf=min_leaf,
                     weights=w, mtry=mtry, rng=rng)
        )
    return _AveragePredictor(trees)


class ForestLearner:
    def __init__(self, B: int = 100, sample_mode: str = "bootstrap",
                 subsample: int | None = None, mtry: int | None = None,
                 max_depth: int = 8, min_leaf: int = 5, seed: int = 0):
        self.B = B
        self.sample_mode = sample_mode
        self.subsample = subsample
        self.mtry = mtry
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.seed = seed

    def fit(self, X, y, weights=None):
        return forest_fit(
            X, y, B=self.B, sample_mode=self.sample_mode,
            subsample=self.subsample, mtry=self.mtry,
            max_depth=self.max_depth, min_leaf=self.min_leaf,
            seed=self.seed, weights=weights,
        )


class _BoostPredictor:
    def __init__(self, stages, rate):
        self._stages = stages
        self._rate = rate

    def predict(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        acc = np.zeros(X.shape[0])
        for stage in self._stages:
            acc += self._rate * stage.predict(X)
        return acc


def boost_fit(X, y, J: int = 100, rate: float = 0.1, base=None,
              weights=None) -> _BoostPredictor:
    """Gradient boosting on squared loss: repeatedly fit the base learner
    to current residuals and accumulate rate-scaled stage predictions."""
    if not 0 < rate <= 1:
        raise DimensionMismatch("learning rate must be in (0, 1]")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    if base is None:
        base = TreeLearner(max_depth=2, min_leaf=1)
    residual = y.copy()
    stages = []
    for _ in range(J):
        stage = base.fit(X, residual, weights=weights)
        stages.append(stage)
        residual = residual - rate * stage.predict(X)
    return _BoostPredictor(stages, rate)


class BoostLearner:
    def __init__(self, J: int = 100, rate: float = 0.1, base=None):
        self.J = J
        self.rate = rate
        self.base = base

    def fit(self, X, y, weights=None):
        return boost_fit(X, y, J=self.J, rate=self.rate, base=self.base,
                         weights=weights)


# ---------------------------------------------------------------------------
# Logistic regression (propensity oracle)


class _LogisticPredictor:
    def __init__(self, beta, clip, separated):
        self.beta = beta
        self.clip = clip
        self.separated = separated

    def _index(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return self.beta[0] + X @ self.beta[1:]

    def predict_proba(self, X):
        p = 1.0 / (1.0 + np.exp(-self._index(X)))
        return np.clip(p, self.clip, 1.0 - self.clip)

    # predict() aliases probabilities so the cross-fitting plumbing can
    # treat propensity oracles like any other regression oracle.
    predict = predict_proba


def logistic_fit(X, d, clip: float = DEFAULT_CLIP, max_iter: int = 100,
                 tol: float = 1e-10, index_cap: float = 30.0,
                 weights=None) -> _LogisticPredictor:
    """Maximum-likelihood logistic regression via IRLS.

    Probabilities are clipped into [clip, 1 - clip]. If the fitted linear
    index exceeds ``index_cap`` anywhere (a symptom of separation), a
    Separation error is raised; callers that want the clipped fit anyway
    can catch it and use ``exc.predictor``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    d = np.asarray(d, dtype=float).ravel()
    if not (np.any(d == 0) and np.any(d == 1)):
        from .errors import OneArmEmpty
        raise OneArmEmpty("logistic fit requires both classes present")
    n = X.shape[0]
    design = np.column_stack([np.ones(n), X])
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    beta = np.zeros(design.shape[1])
    for _ in range(max_iter):
        eta = np.clip(design @ beta, -index_cap - 5.0, index_cap + 5.0)
        mu = 1.0 / (1.0 + np.exp(-eta))
        s = np.maximum(mu * (1.0 - mu), 1e-10) * w
        grad = design.T @ (w * (d - mu))
        hess = design.T @ (design * s[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    predictor = _LogisticPredictor(beta, clip, separated=False)
    if np.max(np.abs(design @ beta)) > index_cap:
        predictor.separated = True
        exc = Separation("fitted linear index exceeds cap; data may be separated")
        exc.predictor = predictor
        raise exc
    return predictor


class LogisticLearner:
    def __init__(self, clip: float = DEFAULT_CLIP):
        self.clip = clip

    def fit(self, X, y, weights=None):
        try:
            return logistic_fit(X, y, clip=self.clip, weights=weights)
        except Separation as exc:
            return exc.predictor


# ---------------------------------------------------------------------------
# Permutation importance


def perm_importance(predictor, X, y, reps: int = 10, seed: int = 0) -> np.ndarray:
    """Average increase in MSE from permuting each feature column."""
    if reps < 1:
        raise DimensionMismatch("reps must be >= 1")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    base_mse = float(np.mean((y - predictor.predict(X)) ** 2))
    n, p = X.shape
    out = np.zeros(p)
    for j in range(p):
        total = 0.0
        for r in range(reps):
            rng = stream(seed, f"perm-{j}", r)
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(n), j]
            # Per-rep difference, so a feature the predictor ignores gets
            # an importance of exactly zero rather than rounding dust.
            total += float(np.mean((y - predictor.predict(Xp)) ** 2)) - base_mse
        out[j] = total / reps
    return out
