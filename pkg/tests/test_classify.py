import numpy as np
import pytest

from skna_denoise.classify import (KINDS, ClassifierSpec, LogisticRegression, RandomForest, SVM, evaluate_fold,
                                   metrics_from_scores, platt_fit, rbf_kernel, roc_points, standardize_features,
                                   train_classifier)
from skna_denoise.errors import InsufficientClassError
from skna_denoise.stats import auroc

sklearn = pytest.importorskip("sklearn")
from sklearn.linear_model import LogisticRegression as SkLR  # noqa: E402
from sklearn.svm import SVC  # noqa: E402


def blobs(rng, n=60, sep=4.0, d=2):
    X = np.vstack([rng.standard_normal((n, d)), rng.standard_normal((n, d)) + sep])
    return X, np.repeat([0, 1], n)


def xor(rng, n=200):
    centers = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], float) * 4
    lab = np.array([0, 0, 1, 1])
    k = np.arange(n) % 4
    return centers[k] + 0.5 * rng.standard_normal((n, 2)), lab[k]


class TestStandardize:
    def test_train_moments(self, rng):
        tr, te, (m, s) = standardize_features(rng.random((50, 4)) * 7 + 3, rng.random((20, 4)))
        assert np.allclose(tr.mean(0), 0, atol=1e-9) and np.allclose(tr.std(0), 1, atol=1e-9)

    def test_uses_train_stats(self, rng):
        Xtr, Xte = rng.standard_normal((40, 3)), rng.standard_normal((25, 3)) * 3 + 2
        _, te, (m, s) = standardize_features(Xtr, Xte)
        assert np.allclose(te, (Xte - Xtr.mean(0)) / Xtr.std(0))
        assert not np.allclose(te.mean(0), 0, atol=1e-3)

    def test_constant_column(self, rng):
        Xtr = np.column_stack([rng.random(10), np.full(10, 5.0)])
        Xte = np.column_stack([rng.random(4), rng.random(4)])
        with pytest.warns(RuntimeWarning, match="zero-variance"):
            tr, te, _ = standardize_features(Xtr, Xte)
        assert not tr[:, 1].any() and not te[:, 1].any()

    def test_column_mismatch(self):
        with pytest.raises(ValueError):
            standardize_features(np.zeros((3, 2)), np.zeros((3, 3)))


class TestModels:
    def test_lr_separable(self, rng):
        X, y = blobs(rng)
        m = train_classifier(ClassifierSpec("logistic_regression"), X, y)
        assert np.all((m.predict_proba(X) >= 0.5) == y)

    def test_lr_matches_sklearn(self, rng):
        X, y = blobs(rng, sep=1.0, d=3)
        ours = LogisticRegression(ClassifierSpec("logistic_regression")).fit(X, y)
        ref = SkLR(C=1.0, tol=1e-10, max_iter=10_000).fit(X, y)
        assert np.allclose(ours.coef, ref.coef_[0], atol=1e-5)
        assert ours.intercept == pytest.approx(ref.intercept_[0], abs=1e-5)

    def test_lr_affine_consistency(self, rng):
        X, y = blobs(rng, sep=1.5, d=3)
        X = X * [1.0, 10.0, 0.1] + [5, -3, 0]
        Xs, _, (mean, std) = standardize_features(X, X)
        m = LogisticRegression(ClassifierSpec("logistic_regression")).fit(Xs, y)
        w, b = m.raw_coefficients(mean, std)
        assert np.allclose(X @ w + b, m.decision_function(Xs), atol=1e-9)

    def test_rf_xor(self, rng):
        X, y = xor(rng)
        m = train_classifier(ClassifierSpec("random_forest", seed=1), X, y)
        assert np.mean((m.predict_proba(X) >= 0.5) == y) >= 0.95

    def test_rf_deterministic(self, rng):
        X, y = xor(rng, 80)
        a = RandomForest(ClassifierSpec(seed=3, n_trees=20)).fit(X, y)
        b = RandomForest(ClassifierSpec(seed=3, n_trees=20)).fit(X, y)
        grid = rng.uniform(-2, 6, (100, 2))
        assert np.array_equal(a.predict_proba(grid), b.predict_proba(grid))
        c = RandomForest(ClassifierSpec(seed=4, n_trees=20)).fit(X, y)
        assert not np.array_equal(a.predict_proba(grid), c.predict_proba(grid))

    def test_rf_monotone_invariance(self, rng):
        X, y = xor(rng, 120)
        grid = rng.uniform(-2, 6, (200, 2))
        a = RandomForest(ClassifierSpec(seed=2, n_trees=25)).fit(X, y).predict_proba(grid)
        f = lambda Z: np.column_stack([np.exp(Z[:, 0]), Z[:, 1] ** 3])  # noqa: E731
        b = RandomForest(ClassifierSpec(seed=2, n_trees=25)).fit(f(X), y).predict_proba(f(grid))
        assert np.array_equal(a, b)

    def test_svm_matches_sklearn(self, rng):
        X, y = xor(rng, 100)
        ours = SVM(ClassifierSpec("svm_rbf")).fit(X, y)
        ref = SVC(C=1.0, kernel="rbf", gamma="scale", tol=1e-3).fit(X, y)
        assert ours.gamma == pytest.approx(ref._gamma)
        assert np.allclose(ours.decision_function(X), ref.decision_function(X), atol=2e-3)

    def test_svm_probabilities(self, rng):
        X, y = blobs(rng, sep=2.0)
        p = train_classifier(ClassifierSpec("svm_rbf"), X, y).predict_proba(X)
        assert np.all((p >= 0) & (p <= 1))
        assert auroc(p[y == 1], p[y == 0]) > 0.9

    def test_platt_direction(self):
        f = np.linspace(-3, 3, 40)
        y = (f > 0).astype(int)
        A, B = platt_fit(f, y)
        assert A < 0

    def test_rbf_kernel(self):
        A = np.array([[0.0, 0.0], [1.0, 1.0]])
        K = rbf_kernel(A, A, 0.5)
        assert np.allclose(K, [[1, np.exp(-1)], [np.exp(-1), 1]])

    @pytest.mark.parametrize("kind", KINDS)
    def test_single_class_rejected(self, kind):
        with pytest.raises(InsufficientClassError):
            train_classifier(ClassifierSpec(kind), np.zeros((5, 2)), np.ones(5))

    @pytest.mark.parametrize("kind", KINDS)
    def test_deterministic_all(self, kind, rng):
        X, y = blobs(rng, n=30, sep=1.0, d=4)
        a = train_classifier(ClassifierSpec(kind, n_trees=10), X, y).predict_proba(X)
        b = train_classifier(ClassifierSpec(kind, n_trees=10), X, y).predict_proba(X)
        assert np.array_equal(a, b)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            ClassifierSpec("knn")


class TestMetrics:
    def test_perfect(self):
        m = metrics_from_scores([1, 1, 0, 0], [1, 1, 0, 0])
        assert (m.accuracy, m.auc, m.f1) == (100.0, 1.0, 100.0)

    def test_chance(self):
        m = metrics_from_scores(np.full(10, 0.5), np.repeat([0, 1], 5))
        assert m.accuracy == 50.0 and m.auc == 0.5

    def test_confusion_fixture(self):
        y = np.array([1] * 23 + [0] * 23)
        p = np.array([0.9] * 21 + [0.1] * 2 + [0.1] * 22 + [0.9] * 1)
        m = metrics_from_scores(p, y)
        assert round(m.sensitivity, 2) == 91.30
        assert round(m.specificity, 2) == 95.65
        assert round(m.accuracy, 2) == 93.48
        assert m.f1 == pytest.approx(100 * 42 / 45)

    def test_missing_class_auc_undefined(self):
        m = metrics_from_scores([0.2, 0.7], [1, 1])
        assert np.isnan(m.auc) and m.accuracy == 50.0

    def test_auc_single_call_path(self, rng):
        X, y = blobs(rng, sep=1.0)
        model = train_classifier(ClassifierSpec("logistic_regression"), X, y)
        fm = evaluate_fold(model, X, y)
        p = model.predict_proba(X)
        assert fm.auc == auroc(p[y == 1], p[y == 0])
        assert set(fm.as_dict()) == {"auc", "accuracy", "sensitivity", "specificity", "f1"}

    def test_roc_points(self):
        fpr, tpr = roc_points([0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0])
        assert (fpr[0], tpr[0]) == (0.0, 0.0) and (fpr[-1], tpr[-1]) == (1.0, 1.0)
        assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)
        assert np.trapezoid(tpr, fpr) == pytest.approx(auroc([0.9, 0.3], [0.8, 0.1]))

    def test_empty(self):
        with pytest.raises(ValueError):
            metrics_from_scores([], [])
