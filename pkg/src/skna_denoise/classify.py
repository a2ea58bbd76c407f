"""From-scratch classifiers for baseline-vs-stimulation windows."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InsufficientClassError
from .stats import auroc

log = logging.getLogger(__name__)

KINDS = ("random_forest", "svm_rbf", "logistic_regression")


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str = "random_forest"
    seed: int = 0
    n_trees: int = 100
    C: float = 1.0
    gamma: float | None = None     # None -> 1 / (d * pooled variance)
    svm_tol: float = 1e-3
    svm_max_iter: int = 100_000
    lam: float = 1.0
    max_iter: int = 1000
    tol: float = 1e-6

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}")


def standardize_features(X_train, X_test):
    """Z-score columns with training statistics; constant columns map to zero."""
    X_train = np.asarray(X_train, dtype=np.float64)
    X_test = np.asarray(X_test, dtype=np.float64)
    if X_train.shape[1:] != X_test.shape[1:]:
        raise ValueError("train and test have different columns")
    mean = X_train.mean(axis=0)
    std = X_train.std(axis=0)
    const = std == 0
    if np.any(const):
        warnings.warn(f"zero-variance feature columns {np.flatnonzero(const).tolist()} set to zero",
                      RuntimeWarning, stacklevel=2)
    safe = np.where(const, 1.0, std)
    tr = np.where(const, 0.0, (X_train - mean) / safe)
    te = np.where(const, 0.0, (X_test - mean) / safe)
    return tr, te, (mean, std)


def _check_xy(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, d) with one label per row")
    if np.unique(y).size < 2:
        raise InsufficientClassError("training set contains a single class")
    return X, y


# -- random forest -------------------------------------------------------------


@dataclass
class _Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # fraction of positives at each node

    def predict(self, X):
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = self.feature[node] >= 0
        while np.any(active):
            idx = np.flatnonzero(active)
            n = node[idx]
            go_left = X[idx, self.feature[n]] <= self.threshold[n]
            node[idx] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] >= 0
        return self.value[node]


def _best_split(X, y, features):
    """Gini-optimal (feature, threshold) over candidate features, or None.

    The threshold is the largest value going left, so predictions depend only
    on the ordering of each feature.
    """
    n = y.size
    best = (0.0, -1, 0.0)
    p_all = y.mean()
    parent = 1.0 - p_all**2 - (1 - p_all) ** 2
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = y[order]
        valid = np.flatnonzero(xs[1:] > xs[:-1])
        if valid.size == 0:
            continue
        cum = np.cumsum(ys)[valid]
        nl = valid + 1.0
        nr = n - nl
        pl = cum / nl
        pr = (ys.sum() - cum) / nr
        child = (nl * (1 - pl**2 - (1 - pl) ** 2) + nr * (1 - pr**2 - (1 - pr) ** 2)) / n
        k = int(np.argmin(child))
        gain = parent - child[k]
        if gain > best[0] + 1e-15:
            best = (gain, int(f), float(xs[valid[k]]))
    return None if best[1] < 0 else best[1:]


def _grow_tree(X, y, max_features, rng) -> _Tree:
    feat, thr, left, right, val = [], [], [], [], []

    def new_node(idx):
        feat.append(-1)
        thr.append(0.0)
        left.append(-1)
        right.append(-1)
        val.append(float(y[idx].mean()))
        return len(feat) - 1

    stack = [(new_node(np.arange(y.size)), np.arange(y.size))]
    d = X.shape[1]
    while stack:
        node, idx = stack.pop()
        yy = y[idx]
        if yy.min() == yy.max():
            continue
        split = _best_split(X[idx], yy, rng.choice(d, size=max_features, replace=False))
        if split is None:
            continue
        f, t = split
        mask = X[idx, f] <= t
        feat[node], thr[node] = f, t
        li, ri = idx[mask], idx[~mask]
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return _Tree(np.array(feat), np.array(thr), np.array(left), np.array(right), np.array(val))


@dataclass
class RandomForest:
    spec: ClassifierSpec
    trees: list = field(default_factory=list)

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        d = X.shape[1]
        m = max(1, int(np.sqrt(d)))
        seeds = np.random.SeedSequence(self.spec.seed).spawn(self.spec.n_trees)
        self.trees = []
        for s in seeds:
            rng = np.random.default_rng(s)
            boot = rng.integers(0, y.size, y.size)
            self.trees.append(_grow_tree(X[boot], y[boot], m, rng))
        return self

    def predict_proba(self, X):
        """Fraction of trees voting for the positive class."""
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros(X.shape[0])
        for t in self.trees:
            votes += t.predict(X) >= 0.5
        return votes / len(self.trees)


# -- RBF support vector machine ---------------------------------------------------


def rbf_kernel(A, B, gamma):
    sq = np.sum(A * A, 1)[:, None] + np.sum(B * B, 1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def platt_fit(f, y, max_iter: int = 100):
    """Sigmoid (A, B) for P(y=1|f) = 1/(1+exp(A f + B)) by damped Newton."""
    f = np.asarray(f, dtype=np.float64)
    n_pos = int(np.sum(y == 1))
    n_neg = y.size - n_pos
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A, B = 0.0, np.log((n_neg + 1.0) / (n_pos + 1.0))

    def objective(A, B):
        z = f * A + B
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)), (t - 1) * z + np.log1p(np.exp(z)))))

    fval = objective(A, B)
    for _ in range(max_iter):
        z = f * A + B
        p = np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))
        q = 1 - p
        d2 = p * q
        h11 = np.sum(f * f * d2) + 1e-12
        h22 = np.sum(d2) + 1e-12
        h21 = np.sum(f * d2)
        d1 = t - p
        g1 = np.sum(f * d1)
        g2 = np.sum(d1)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = objective(nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2
        else:
            break
    return float(A), float(B)


@dataclass
class SVM:
    spec: ClassifierSpec
    gamma: float = 0.0
    sv: np.ndarray | None = None
    coef: np.ndarray | None = None
    rho: float = 0.0
    platt: tuple = (0.0, 0.0)
    n_iter: int = 0

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        var = X.var()
        self.gamma = self.spec.gamma or (1.0 / (X.shape[1] * var) if var > 0 else 1.0)
        ys = np.where(y == 1, 1.0, -1.0)
        K = rbf_kernel(X, X, self.gamma)
        alpha, self.rho, self.n_iter = kernels.smo_solve(K, ys, float(self.spec.C), float(self.spec.svm_tol),
                                                        int(self.spec.svm_max_iter))
        keep = alpha > 0
        self.sv = X[keep]
        self.coef = (alpha * ys)[keep]
        self.platt = platt_fit(K[:, keep] @ self.coef - self.rho, y)
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        if self.sv.shape[0] == 0:
            return np.full(X.shape[0], -self.rho)
        return rbf_kernel(X, self.sv, self.gamma) @ self.coef - self.rho

    def predict_proba(self, X):
        A, B = self.platt
        z = A * self.decision_function(X) + B
        return np.where(z >= 0, np.exp(-z) / (1 + np.exp(-z)), 1 / (1 + np.exp(z)))


# -- logistic regression -----------------------------------------------------------


def _sigmoid(z):
    return np.where(z >= 0, 1 / (1 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1 + np.exp(-np.abs(z))))


@dataclass
class LogisticRegression:
    spec: ClassifierSpec
    coef: np.ndarray | None = None
    intercept: float = 0.0
    n_iter: int = 0
    solver: str = "irls"

    def _penalised_loss(self, A, y, beta, pen):
        z = A @ beta
        return float(np.sum(np.logaddexp(0, z) - y * z) + 0.5 * np.sum(pen * beta * beta))

    def fit(self, X, y):
        """L2-penalised (intercept excluded) maximum likelihood by IRLS."""
        X, y = _check_xy(X, y)
        n, d = X.shape
        A = np.hstack([X, np.ones((n, 1))])
        pen = np.r_[np.full(d, self.spec.lam), 0.0]
        beta = np.zeros(d + 1)
        try:
            for it in range(self.spec.max_iter):
                p = _sigmoid(A @ beta)
                w = p * (1 - p)
                g = A.T @ (p - y) + pen * beta
                H = (A * w[:, None]).T @ A + np.diag(pen)
                step = np.linalg.solve(H, g)
                if not np.all(np.isfinite(step)):
                    raise np.linalg.LinAlgError("non-finite Newton step")
                beta -= step
                self.n_iter = it + 1
                if np.max(np.abs(step)) < self.spec.tol:
                    break
            self.solver = "irls"
        except np.linalg.LinAlgError:
            log.warning("singular IRLS Hessian; falling back to gradient descent")
            beta = self._gradient_descent(A, y, pen)
            self.solver = "gd"
        self.coef, self.intercept = beta[:d], float(beta[d])
        return self

    def _gradient_descent(self, A, y, pen):
        beta = np.zeros(A.shape[1])
        lr = 1.0 / (0.25 * np.linalg.norm(A, 2) ** 2 + pen.max() + 1e-12)
        for it in range(self.spec.max_iter):
            g = A.T @ (_sigmoid(A @ beta) - y) + pen * beta
            beta -= lr * g
            self.n_iter = it + 1
            if np.max(np.abs(lr * g)) < self.spec.tol:
                break
        return beta

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef + self.intercept

    def predict_proba(self, X):
        return _sigmoid(self.decision_function(X))

    def raw_coefficients(self, mean, std):
        """Coefficients acting on unstandardised features."""
        std = np.where(np.asarray(std) == 0, 1.0, std)
        w = self.coef / std
        return w, self.intercept - float(np.sum(w * mean))


def train_classifier(spec: ClassifierSpec, X, y):
    model = {"random_forest": RandomForest, "svm_rbf": SVM, "logistic_regression": LogisticRegression}[spec.kind]
    return model(spec).fit(X, y)


@dataclass
class FoldMetrics:
    auc: float
    accuracy: float
    sensitivity: float
    specificity: float
    f1: float
    probabilities: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)

    METRICS = ("auc", "accuracy", "sensitivity", "specificity", "f1")

    def as_dict(self) -> dict:
        return {m: getattr(self, m) for m in self.METRICS}


def _pct(num, den):
    return 100.0 * num / den if den else np.nan


def metrics_from_scores(probs, y, threshold: float = 0.5) -> FoldMetrics:
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y).astype(np.int64)
    if probs.size == 0:
        raise ValueError("empty test set")
    pred = probs >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fn = int(np.sum(~pred & pos))
    tn = int(np.sum(~pred & ~pos))
    fp = int(np.sum(pred & ~pos))
    auc = auroc(probs[pos], probs[~pos]) if pos.any() and (~pos).any() else np.nan
    return FoldMetrics(auc, _pct(tp + tn, y.size), _pct(tp, tp + fn), _pct(tn, tn + fp),
                       _pct(2 * tp, 2 * tp + fp + fn), probs, y)


def evaluate_fold(model, X_test, y_test) -> FoldMetrics:
    return metrics_from_scores(model.predict_proba(X_test), y_test)


def roc_points(probs, y):
    """(fpr, tpr) arrays over all distinct score thresholds."""
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y).astype(bool)
    thr = np.r_[np.inf, np.unique(probs)[::-1]]
    P, N = max(y.sum(), 1), max((~y).sum(), 1)
    tpr = np.array([np.sum((probs >= t) & y) / P for t in thr])
    fpr = np.array([np.sum((probs >= t) & ~y) / N for t in thr])
    return fpr, tpr
