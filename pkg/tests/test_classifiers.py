"""
Unit tests for classifiers module
"""

import os
import sys
import tempfile
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import f1_score

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from classifiers import (
    LinearModel,
    NoInfoModel,
    ThresholdModel,
    TrainSpec,
    align_columns,
    class_weight_vector,
    fit,
    load_model,
    logistic_loss_and_grad,
    logreg_train,
    mean_pairwise_jaccard,
    noinfo_closed_form_f1,
    noinfo_expected_f1,
    noinfo_train,
    predict,
    save_model,
    selection_stability,
    threshold_train,
    top_weighted_features,
)
from errors import ConfigError, DatasetParseError, SingleClassError
from gbt import GBTModel


def noisy_linear_data(seed=0, n=200, d=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    logits = X @ np.linspace(2, -1, d) + 0.3
    y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(np.int64)
    return X, y


class TestClassWeights(unittest.TestCase):
    def test_balanced(self):
        w = class_weight_vector(np.array([0, 0, 0, 1]), "balanced")
        np.testing.assert_allclose(w, [4 / 6, 4 / 6, 4 / 6, 2.0])
        self.assertAlmostEqual(w[:3].sum(), w[3:].sum())

    def test_explicit_and_none(self):
        np.testing.assert_allclose(class_weight_vector(np.array([0, 1]), {1: 3.0}), [1.0, 3.0])
        np.testing.assert_allclose(class_weight_vector(np.array([0, 1]), "none"), [1.0, 1.0])
        with self.assertRaises(ConfigError):
            class_weight_vector(np.array([0, 1]), "inverse")

    def test_align_columns(self):
        X = sparse.csr_matrix(np.ones((2, 3)))
        self.assertEqual(align_columns(X, 5).shape, (2, 5))
        self.assertEqual(align_columns(X, 2).shape, (2, 2))


class TestLogisticRegression(unittest.TestCase):
    """Penalized logistic regression"""

    def test_matches_scikit_learn_l2(self):
        X, y = noisy_linear_data()
        lam = 0.01
        model = logreg_train(X, y, l2_lambda=lam, tol=1e-7)
        reference = LogisticRegression(C=1.0 / (2 * len(y) * lam), tol=1e-10, max_iter=10_000).fit(X, y)
        np.testing.assert_allclose(model.weights, reference.coef_.ravel(), atol=1e-3)
        self.assertAlmostEqual(model.bias, float(reference.intercept_[0]), places=3)
        self.assertTrue(model.converged)

    def test_gradient_vanishes_at_solution(self):
        X, y = noisy_linear_data(1)
        model = logreg_train(sparse.csr_matrix(X), y, l2_lambda=1e-3, class_weights="balanced", tol=1e-8)
        weights = class_weight_vector(y, "balanced")
        _, grad_w, grad_b = logistic_loss_and_grad(model.weights, model.bias, X, y, weights, 1e-3)
        self.assertLess(np.linalg.norm(grad_w), 1e-5)
        self.assertLess(abs(grad_b), 1e-5)

    def test_random_init_reaches_same_optimum(self):
        X, y = noisy_linear_data(2)
        a = logreg_train(X, y, l2_lambda=0.05, tol=1e-8)
        b = logreg_train(X, y, l2_lambda=0.05, tol=1e-8, init="random", seed=5)
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-4)

    def test_tolerance_bounds_the_column_scaled_gradient(self):
        X, y = noisy_linear_data(6)
        X[:, 0] *= 1000.0
        tol = 1e-5
        model = logreg_train(X, y, l2_lambda=1e-3, tol=tol)
        self.assertTrue(model.converged)
        _, grad_w, grad_b = logistic_loss_and_grad(model.weights, model.bias, X, y, None, 1e-3)
        scale = np.abs(X).max(axis=0)
        self.assertLessEqual(np.abs(grad_w / scale).max(), tol)
        self.assertLessEqual(abs(grad_b), tol)

    def test_analytic_gradient_matches_central_differences(self):
        rng = np.random.default_rng(11)
        eps = 1e-6
        for _ in range(100):
            n, d = int(rng.integers(5, 30)), int(rng.integers(1, 6))
            X = rng.normal(size=(n, d))
            y = rng.integers(0, 2, size=n)
            weights = rng.uniform(0.5, 2.0, size=n)
            w, b, lam = rng.normal(size=d), float(rng.normal()), float(rng.uniform(0, 0.1))
            _, grad_w, grad_b = logistic_loss_and_grad(w, b, X, y, weights, lam)
            numeric = np.empty(d + 1)
            for j in range(d):
                step = np.zeros(d)
                step[j] = eps
                plus = logistic_loss_and_grad(w + step, b, X, y, weights, lam)[0]
                minus = logistic_loss_and_grad(w - step, b, X, y, weights, lam)[0]
                numeric[j] = (plus - minus) / (2 * eps)
            plus = logistic_loss_and_grad(w, b + eps, X, y, weights, lam)[0]
            minus = logistic_loss_and_grad(w, b - eps, X, y, weights, lam)[0]
            numeric[d] = (plus - minus) / (2 * eps)
            analytic = np.append(grad_w, grad_b)
            scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
            self.assertLess(np.linalg.norm(analytic - numeric) / scale, 1e-5)

    def test_retraining_from_random_starts_gives_one_loss(self):
        X, y = noisy_linear_data(4, d=8)
        losses = [logreg_train(X, y, l2_lambda=0.01, init="random", seed=s).train_loss for s in range(5)]
        self.assertLess(max(losses) - min(losses), 1e-6)

    def test_duplicated_positives_match_class_weight(self):
        X, y = noisy_linear_data(5)
        k = 3
        positives = np.flatnonzero(y == 1)
        X_dup = np.vstack([X] + [X[positives]] * (k - 1))
        y_dup = np.concatenate([y] + [y[positives]] * (k - 1))
        weighted = logreg_train(X, y, l2_lambda=0.01, class_weights={1: float(k)}, tol=1e-8)
        duplicated = logreg_train(X_dup, y_dup, l2_lambda=0.01, tol=1e-8)
        np.testing.assert_allclose(weighted.weights, duplicated.weights, atol=1e-5)
        self.assertAlmostEqual(weighted.bias, duplicated.bias, places=5)

    def test_l1_penalty_is_sparse(self):
        X, y = noisy_linear_data(3, d=20)
        l2 = logreg_train(X, y, l2_lambda=0.02)
        l1 = logreg_train(X, y, l2_lambda=0.05, penalty="l1")
        self.assertLess(np.count_nonzero(l1.weights), np.count_nonzero(l2.weights))
        empty = logreg_train(X, y, l2_lambda=10.0, penalty="l1")
        self.assertEqual(np.count_nonzero(empty.weights), 0)

    def test_unknown_settings(self):
        X, y = noisy_linear_data()
        with self.assertRaises(ConfigError):
            logreg_train(X, y, penalty="elasticnet")
        with self.assertRaises(ConfigError):
            logreg_train(X, y, l2_lambda=-1)
        with self.assertRaises(SingleClassError):
            logreg_train(X, np.zeros(len(y)))

    def test_prediction_pads_missing_columns(self):
        model = LinearModel(weights=np.array([1.0, -1.0, 2.0]), bias=0.0, l2_lambda=0.0)
        labels, scores = predict(model, np.array([[1.0, 0.0], [0.0, 3.0]]))
        self.assertEqual(labels.tolist(), [1, 0])
        self.assertAlmostEqual(scores[0], 1 / (1 + np.exp(-1)))

    def test_top_weighted_features(self):
        model = LinearModel(weights=np.array([0.5, -2.0, 0.0, 2.0]), bias=0.0, l2_lambda=0.0)
        top = top_weighted_features(model, ["a", "b", "c", "d"], k=3)
        self.assertEqual(top, [("b", -2.0), ("d", 2.0), ("a", 0.5)])


class TestSelectionStability(unittest.TestCase):
    def test_jaccard(self):
        self.assertAlmostEqual(mean_pairwise_jaccard([{1, 2}, {2, 3}]), 1 / 3)
        self.assertEqual(mean_pairwise_jaccard([{1}]), 1.0)
        self.assertEqual(mean_pairwise_jaccard([set(), set()]), 1.0)
        self.assertAlmostEqual(mean_pairwise_jaccard([{1}, {1}, {2}]), 1 / 3)

    def test_identical_models_are_fully_stable(self):
        model = LinearModel(weights=np.array([3.0, 0.0, 1.0]), bias=0.0, l2_lambda=0.0)
        other = LinearModel(weights=np.array([0.0, 3.0, 1.0]), bias=0.0, l2_lambda=0.0)
        self.assertEqual(selection_stability([model, model], k=2), 1.0)
        self.assertAlmostEqual(selection_stability([model, other], k=2), 1 / 3)


class TestThreshold(unittest.TestCase):
    """Single-attribute threshold baseline"""

    def test_separable(self):
        model = threshold_train([1, 2, 3, 4], [0, 0, 1, 1], attribute="size")
        self.assertEqual(model.threshold, 2.5)
        self.assertEqual(model.train_f1, 1.0)

    def test_ties_prefer_smallest_threshold(self):
        # everything positive (F1 0.8) beats every finite cut
        model = threshold_train([1, 2, 3], [1, 0, 1])
        self.assertEqual(model.threshold, -np.inf)
        self.assertAlmostEqual(model.train_f1, 0.8)
        tied = threshold_train([1, 2, 3, 4], [1, 0, 0, 1])
        self.assertEqual(tied.threshold, -np.inf)

    def test_no_positives_predicts_nothing(self):
        model = threshold_train([1, 2, 3], [0, 0, 0])
        self.assertEqual(model.threshold, np.inf)
        labels, _ = predict(model, np.array([[5.0], [100.0]]))
        self.assertEqual(labels.tolist(), [0, 0])

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(
            st.tuples(st.integers(min_value=0, max_value=6), st.integers(min_value=0, max_value=1)),
            min_size=1,
            max_size=25,
        )
    )
    def test_training_f1_equals_exhaustive_search(self, rows):
        values = np.asarray([v for v, _ in rows], dtype=np.float64)
        y = np.asarray([label for _, label in rows])
        best = 0.0
        for cut in list(np.unique(values)) + [np.inf]:
            predicted = (values >= cut).astype(np.int64)
            best = max(best, f1_score(y, predicted, zero_division=0.0))
        model = threshold_train(values, y)
        self.assertAlmostEqual(model.train_f1, best)
        labels, _ = predict(model, values.reshape(-1, 1))
        self.assertAlmostEqual(f1_score(y, labels, zero_division=0.0), best)

    def test_predict_uses_column(self):
        model = ThresholdModel(attribute="b", threshold=2.0, column=1)
        labels, _ = predict(model, sparse.csr_matrix(np.array([[9.0, 1.0], [0.0, 2.0]])))
        self.assertEqual(labels.tolist(), [0, 1])


class TestNoInfo(unittest.TestCase):
    """Bernoulli baseline"""

    def test_simulation_approaches_closed_form(self):
        for q, p in ((0.3, 0.4), (0.8, 0.1), (1.0, 0.5)):
            simulated = noinfo_expected_f1(q, p, n=5000, n_draws=2000)
            self.assertAlmostEqual(simulated, noinfo_closed_form_f1(q, p), delta=0.01)

    def test_always_positive_is_best(self):
        y = np.array([1] * 30 + [0] * 70)
        model = noinfo_train(y, n_draws=2000)
        self.assertGreaterEqual(model.q, 0.95)
        self.assertAlmostEqual(model.prevalence, 0.3)
        self.assertAlmostEqual(noinfo_expected_f1(1.0, 0.3, n=100), 60 / 130)

    def test_prediction_is_seeded(self):
        model = NoInfoModel(q=0.5, seed=4)
        a, _ = predict(model, np.zeros((50, 1)))
        b, _ = predict(model, np.zeros((50, 1)))
        self.assertEqual(a.tolist(), b.tolist())

    def test_invalid_probabilities(self):
        with self.assertRaises(ValueError):
            noinfo_expected_f1(1.5, 0.2)


class TestModelFiles(unittest.TestCase):
    """Training dispatch and JSON model files"""

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.X, self.y = noisy_linear_data(4, n=80)

    def tearDown(self):
        self.tmpdir.cleanup()

    def _round_trip(self, model):
        target = os.path.join(self.tmpdir.name, "model.json")
        save_model(model, target, meta={"config_hash": "abc"})
        loaded, meta = load_model(target)
        self.assertEqual(meta, {"config_hash": "abc"})
        return loaded

    def test_every_kind_survives_a_round_trip(self):
        specs = [
            TrainSpec("linear", {"l2_lambda": 0.01}),
            TrainSpec("gbt", {"n_trees": 5, "max_leaves": 4}),
            TrainSpec("threshold"),
            TrainSpec("noinfo", {"n_draws": 500}),
        ]
        for spec in specs:
            model = fit(spec, self.X, self.y, class_weights="balanced", seed=1)
            loaded = self._round_trip(model)
            self.assertIs(type(loaded), type(model))
            np.testing.assert_allclose(predict(loaded, self.X)[1], predict(model, self.X)[1])

    def test_gbt_dispatch(self):
        model = fit(TrainSpec("gbt", {"n_trees": 3}), self.X, self.y, seed=9)
        self.assertIsInstance(model, GBTModel)
        self.assertEqual(model.params.seed, 9)

    def test_unknown_kind(self):
        with self.assertRaises(ConfigError):
            TrainSpec("svm")

    def test_foreign_file_rejected(self):
        target = os.path.join(self.tmpdir.name, "other.json")
        with open(target, "w", encoding="utf-8") as fh:
            fh.write('{"format": "something-else"}')
        with self.assertRaises(DatasetParseError):
            load_model(target)


if __name__ == "__main__":
    unittest.main()
