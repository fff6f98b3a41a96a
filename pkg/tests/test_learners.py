import numpy as np
import pytest
from hypothesis import given, strategies as st

from dmlkit.errors import BadFoldCount, DimensionMismatch, OneArmEmpty, Separation
from dmlkit.learners import (BoostLearner, CrossFitPlan, ForestLearner,
                             LassoPluginLearner, LinearLearner,
                             LogisticLearner, MeanLearner, TreeLearner,
                             ZeroLearner, boost_fit, cross_fit_predict,
                             forest_fit, learner_select, logistic_fit,
                             make_folds, no_crossfit_plan, perm_importance,
                             tree_fit)


class _Memorizer:
    """Learner that memorizes training rows and answers with the label of
    the nearest one; the canonical overfitter."""

    def fit(self, X, y, weights=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)

        class P:
            def predict(self, Xn):
                Xn = np.asarray(Xn, dtype=float)
                d2 = ((Xn[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
                return y[np.argmin(d2, axis=1)]

        return P()


class TestFolds:
    def test_even_split(self):
        plan = make_folds(10, 5, seed=0)
        sizes = sorted(plan.fold_indices(k).size for k in range(5))
        assert sizes == [2, 2, 2, 2, 2]

    def test_leave_one_out(self):
        plan = make_folds(6, 6, seed=1)
        assert all(plan.fold_indices(k).size == 1 for k in range(6))

    def test_pigeonhole_sizes(self):
        plan = make_folds(11, 5, seed=2)
        sizes = sorted(plan.fold_indices(k).size for k in range(5))
        assert sizes == [2, 2, 2, 2, 3]

    def test_partition_property(self):
        plan = make_folds(23, 4, seed=3)
        joined = np.sort(np.concatenate([plan.fold_indices(k)
                                         for k in range(4)]))
        assert np.array_equal(joined, np.arange(23))

    def test_bad_fold_counts(self):
        with pytest.raises(BadFoldCount):
            make_folds(10, 1, seed=0)
        with pytest.raises(BadFoldCount):
            make_folds(5, 6, seed=0)

    def test_deterministic_per_seed(self):
        a = make_folds(30, 5, seed=9)
        b = make_folds(30, 5, seed=9)
        c = make_folds(30, 5, seed=10)
        assert np.array_equal(a.assignment, b.assignment)
        assert not np.array_equal(a.assignment, c.assignment)

    def test_no_crossfit_plan_is_full_sample(self):
        plan = no_crossfit_plan(7)
        assert plan.K == 1
        assert np.array_equal(plan.complement_indices(0), np.arange(7))


class TestCrossFitPredict:
    def test_out_of_fold_means(self):
        plan = CrossFitPlan(n=4, K=2,
                            assignment=np.array([0, 0, 1, 1]), seed=0)
        y = np.array([1.0, 3.0, 5.0, 7.0])
        preds, _ = cross_fit_predict(MeanLearner(), np.zeros((4, 1)), y, plan)
        assert preds == pytest.approx([6.0, 6.0, 2.0, 2.0])

    def test_zero_learner(self):
        plan = make_folds(8, 2, seed=0)
        preds, _ = cross_fit_predict(ZeroLearner(), np.ones((8, 1)),
                                     np.arange(8.0), plan)
        assert preds == pytest.approx(np.zeros(8))

    def test_memorizer_overfits_in_fold_only(self):
        r = np.random.default_rng(4)
        X = r.standard_normal((40, 2))
        y = r.standard_normal(40)  # pure noise
        plan = make_folds(40, 2, seed=5)
        oof, predictors = cross_fit_predict(_Memorizer(), X, y, plan)
        oof_mse = np.mean((y - oof) ** 2)
        in_fold = predictors[0].predict(X[plan.complement_indices(0)])
        in_mse = np.mean((y[plan.complement_indices(0)] - in_fold) ** 2)
        assert in_mse == pytest.approx(0.0)
        assert oof_mse > 0.5

    def test_honest_contract_under_label_corruption(self):
        r = np.random.default_rng(6)
        X = r.standard_normal((20, 2))
        y = r.standard_normal(20)
        plan = make_folds(20, 4, seed=7)
        base, _ = cross_fit_predict(LinearLearner(), X, y, plan)
        fold0 = plan.fold_indices(0)
        y2 = y.copy()
        y2[fold0] += 100.0
        corrupted, _ = cross_fit_predict(LinearLearner(), X, y2, plan)
        # Fold-0 rows are predicted without fold-0 labels, so corrupting
        # those labels cannot move their own predictions.
        assert corrupted[fold0] == pytest.approx(base[fold0])
        others = np.setdiff1d(np.arange(20), fold0)
        assert not np.allclose(corrupted[others], base[others])


class TestTrees:
    def test_depth_zero_predicts_mean(self):
        tree = tree_fit(np.arange(4.0)[:, None], np.array([1.0, 2.0, 3.0, 6.0]),
                        max_depth=0)
        assert tree.predict(np.array([[10.0]]))[0] == pytest.approx(3.0)

    def test_single_split_enumeration(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])[:, None]
        y = np.array([0.0, 0.0, 1.0, 1.0])
        tree = tree_fit(x, y, max_depth=1)
        assert tree.predict(x) == pytest.approx(y)
        assert tree.predict(np.array([[2.4]]))[0] == 0.0
        assert tree.predict(np.array([[2.6]]))[0] == 1.0

    def test_constant_outcome_single_leaf(self):
        tree = tree_fit(np.arange(5.0)[:, None], np.full(5, 2.0), max_depth=4)
        assert np.all(tree.predict(np.arange(5.0)[:, None]) == 2.0)

    @given(st.integers(0, 10_000))
    def test_training_rows_get_leaf_means(self, seed):
        r = np.random.default_rng(seed)
        X = r.standard_normal((30, 2))
        y = r.standard_normal(30)
        tree = tree_fit(X, y, max_depth=3, min_leaf=2)
        preds = tree.predict(X)
        for value in np.unique(preds):
            rows = preds == value
            assert np.mean(y[rows]) == pytest.approx(value, abs=1e-10)

    def test_deep_tree_interpolates_distinct_rows(self):
        r = np.random.default_rng(8)
        X = r.standard_normal((16, 1))
        y = r.standard_normal(16)
        tree = tree_fit(X, y, max_depth=16, min_leaf=1)
        assert tree.predict(X) == pytest.approx(y)


class TestForest:
    def test_single_full_tree_equals_tree_fit(self):
        r = np.random.default_rng(9)
        X = r.standard_normal((25, 3))
        y = r.standard_normal(25)
        forest = forest_fit(X, y, B=1, sample_mode="full", max_depth=4,
                            min_leaf=2, seed=0)
        tree = tree_fit(X, y, max_depth=4, min_leaf=2)
        assert forest.predict(X) == pytest.approx(tree.predict(X))

    def test_identical_resamples_average_to_one_tree(self):
        r = np.random.default_rng(10)
        X = r.standard_normal((20, 2))
        y = r.standard_normal(20)
        a = forest_fit(X, y, B=3, sample_mode="full", max_depth=3, seed=1)
        single = tree_fit(X, y, max_depth=3, min_leaf=5)
        assert a.predict(X) == pytest.approx(single.predict(X))

    @given(st.integers(0, 5_000))
    def test_prediction_within_outcome_range(self, seed):
        r = np.random.default_rng(seed)
        X = r.standard_normal((30, 2))
        y = r.standard_normal(30)
        forest = forest_fit(X, y, B=5, seed=seed)
        preds = forest.predict(r.standard_normal((10, 2)))
        assert np.all(preds >= y.min() - 1e-12)
        assert np.all(preds <= y.max() + 1e-12)

    def test_deterministic_per_seed(self):
        r = np.random.default_rng(11)
        X = r.standard_normal((40, 3))
        y = r.standard_normal(40)
        Xn = r.standard_normal((15, 3))
        a = ForestLearner(B=10, seed=21).fit(X, y).predict(Xn)
        b = ForestLearner(B=10, seed=21).fit(X, y).predict(Xn)
        assert np.array_equal(a, b)


class TestBoosting:
    def test_constant_base_geometric_recursion(self):
        y = np.array([1.0, 2.0, 3.0])  # mean 2
        pred = boost_fit(np.zeros((3, 1)), y, J=2, rate=0.5,
                         base=MeanLearner()).predict(np.zeros((1, 1)))
        assert pred[0] == pytest.approx(2.0 * (1.0 - 0.5**2))

    def test_full_rate_unrestricted_tree_fits_training_data(self):
        r = np.random.default_rng(12)
        X = r.standard_normal((12, 1))
        y = r.standard_normal(12)
        pred = boost_fit(X, y, J=1, rate=1.0,
                         base=TreeLearner(max_depth=12, min_leaf=1))
        assert pred.predict(X) == pytest.approx(y)

    def test_rate_outside_unit_interval_rejected(self):
        with pytest.raises(DimensionMismatch):
            boost_fit(np.zeros((4, 1)), np.arange(4.0), J=2, rate=0.0)

    def test_training_mse_non_increasing_in_rounds(self):
        r = np.random.default_rng(13)
        X = r.standard_normal((60, 2))
        y = X[:, 0] + 0.5 * r.standard_normal(60)
        mses = []
        for J in (1, 3, 10, 30):
            pred = boost_fit(X, y, J=J, rate=0.3).predict(X)
            mses.append(np.mean((y - pred) ** 2))
        assert all(b <= a + 1e-10 for a, b in zip(mses, mses[1:]))


class TestLogistic:
    def test_intercept_only_sample_proportion(self):
        pred = logistic_fit(np.zeros((4, 1)), np.array([1.0, 1.0, 1.0, 0.0]))
        probs = pred.predict_proba(np.zeros((2, 1)))
        assert probs == pytest.approx([0.75, 0.75], abs=1e-6)

    def test_balanced_no_covariates(self):
        pred = logistic_fit(np.zeros((4, 1)), np.array([1.0, 0.0, 1.0, 0.0]))
        assert pred.predict_proba(np.zeros((1, 1)))[0] == pytest.approx(0.5)

    def test_one_class_rejected(self):
        with pytest.raises(OneArmEmpty):
            logistic_fit(np.zeros((4, 1)), np.ones(4))

    def test_separation_raises_with_clipped_predictor(self):
        X = np.linspace(-1, 1, 20)[:, None]
        d = (X[:, 0] > 0).astype(float)
        with pytest.raises(Separation) as exc:
            logistic_fit(X, d, clip=0.01)
        probs = exc.value.predictor.predict_proba(X)
        assert np.all(probs >= 0.01) and np.all(probs <= 0.99)

    def test_learner_wrapper_swallows_separation(self):
        X = np.linspace(-1, 1, 20)[:, None]
        d = (X[:, 0] > 0).astype(float)
        pred = LogisticLearner().fit(X, d)
        probs = pred.predict_proba(X)
        assert np.all((probs >= 0.01) & (probs <= 0.99))


class TestLearnerSelect:
    def test_single_candidate(self):
        plan = make_folds(10, 2, seed=0)
        out = learner_select([MeanLearner()], np.zeros((10, 1)),
                             np.arange(10.0), plan)
        assert out["best_index"] == 0

    def test_mean_beats_zero_on_shifted_outcome(self):
        plan = make_folds(20, 4, seed=1)
        y = np.full(20, 5.0) + 0.01 * np.random.default_rng(0).standard_normal(20)
        out = learner_select([ZeroLearner(), MeanLearner()],
                             np.zeros((20, 1)), y, plan)
        assert out["best_index"] == 1
        assert out["mspe"][1] < out["mspe"][0]

    def test_identical_candidates_tie_to_first(self):
        plan = make_folds(12, 3, seed=2)
        out = learner_select([MeanLearner(), MeanLearner()],
                             np.zeros((12, 1)), np.arange(12.0), plan)
        assert out["best_index"] == 0


class TestPermImportance:
    def test_ignored_feature_zero(self):
        r = np.random.default_rng(14)
        X = r.standard_normal((30, 2))
        y = X[:, 0].copy()
        model = LinearLearner().fit(X[:, :1], y)

        class OnlyFirst:
            def predict(self, Xn):
                return model.predict(np.asarray(Xn)[:, :1])

        imp = perm_importance(OnlyFirst(), X, y, reps=5, seed=0)
        assert imp[1] == 0.0
        assert imp[0] > 0.0

    def test_perfect_linear_model_importance_scale(self):
        # For y = x and the identity model, permuting x gives expected
        # MSE E[(x_perm - x)^2] = 2 Var(x) (up to finite-n factors).
        r = np.random.default_rng(15)
        x = r.standard_normal(500)
        X = x[:, None]

        class Identity:
            def predict(self, Xn):
                return np.asarray(Xn)[:, 0]

        imp = perm_importance(Identity(), X, x, reps=40, seed=1)
        assert imp[0] == pytest.approx(2.0 * np.var(x), rel=0.15)

    def test_exhaustive_oracle_at_n_4(self):
        import itertools

        x = np.array([0.0, 1.0, 2.0, 4.0])
        X = x[:, None]

        class Identity:
            def predict(self, Xn):
                return np.asarray(Xn)[:, 0]

        exact = np.mean([np.mean((x[list(p)] - x) ** 2)
                         for p in itertools.permutations(range(4))])
        imp = perm_importance(Identity(), X, x, reps=400, seed=2)
        assert imp[0] == pytest.approx(exact, rel=0.2)


class TestLassoPluginLearner:
    def test_predicts_sparse_signal(self):
        r = np.random.default_rng(16)
        X = r.standard_normal((80, 10))
        y = 2.0 * X[:, 0] + 0.1 * r.standard_normal(80)
        pred = LassoPluginLearner().fit(X, y)
        mse = np.mean((y - pred.predict(X)) ** 2)
        assert mse < 0.1
