"""Soft-margin binary classifiers with sklearn-compatible interfaces.

``kind="linear"`` minimizes ``0.5 ||w||^2 + C * sum_i hinge(y_i (w.x_i + b))``
by full-batch subgradient descent with a decaying step and iterate
averaging. ``kind="rbf"`` solves the dual of the same problem with a Gaussian
kernel by coordinate descent; the bias is absorbed by adding 1 to the kernel.
Features are standardized with training statistics in both cases.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import GridSearchCV, StratifiedKFold
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, check_X_y, validate_data

DEFAULT_GRID = [
    {"kind": ["linear"], "C": [0.1, 1.0, 10.0]},
    {"kind": ["rbf"], "C": [0.1, 1.0, 10.0], "gamma": [0.01, 0.1, 1.0]},
]


class MarginClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, kind: str = "linear", C: float = 1.0, gamma: float = 0.1, max_iter: int = 500, tol: float = 1e-6):
        self.kind = kind
        self.C = C
        self.gamma = gamma
        self.max_iter = max_iter
        self.tol = tol

    def _kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2 * A @ B.T
        return np.exp(-self.gamma * np.maximum(sq, 0.0)) + 1.0

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        validate_data(self, X, reset=True, skip_check_array=True)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {len(self.classes_)}")
        if self.kind not in ("linear", "rbf"):
            raise ValueError(f"kind must be 'linear' or 'rbf', got {self.kind!r}")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        Z = (X - self.mean_) / self.scale_
        s = np.where(y == self.classes_[1], 1.0, -1.0)
        self.majority_ = 1.0 if (s > 0).sum() >= (s < 0).sum() else -1.0
        if self.kind == "linear":
            self._fit_linear(Z, s)
        else:
            self._fit_rbf(Z, s)
        return self

    def _fit_linear(self, Z: np.ndarray, s: np.ndarray) -> None:
        n, d = Z.shape
        w, b = np.zeros(d), 0.0
        w_avg, b_avg = np.zeros(d), 0.0
        # the objective is 1-strongly convex in w: step 1/t with iterate averaging
        for t in range(1, self.max_iter + 1):
            active = s * (Z @ w + b) < 1
            gw = w - self.C * (s[active, None] * Z[active]).sum(axis=0)
            gb = -self.C * s[active].sum()
            w = w - gw / t
            b = b - gb / (t * max(1.0, self.C * n))
            w_avg += (w - w_avg) / t
            b_avg += (b - b_avg) / t
        self.coef_, self.intercept_ = w_avg, b_avg

    def _fit_rbf(self, Z: np.ndarray, s: np.ndarray) -> None:
        n = Z.shape[0]
        K = self._kernel(Z, Z)
        Q = K * s[:, None] * s[None, :]
        alpha = np.zeros(n)
        grad = -np.ones(n)  # Q @ alpha - 1
        for _ in range(self.max_iter):
            biggest = 0.0
            for i in range(n):
                new = min(max(alpha[i] - grad[i] / Q[i, i], 0.0), self.C)
                delta = new - alpha[i]
                if delta != 0.0:
                    alpha[i] = new
                    grad += delta * Q[:, i]
                    biggest = max(biggest, abs(delta))
            if biggest < self.tol:
                break
        keep = alpha > 0
        self.support_ = Z[keep]
        self.dual_coef_ = alpha[keep] * s[keep]

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "classes_")
        X = validate_data(self, X, reset=False, dtype=np.float64)
        Z = (X - self.mean_) / self.scale_
        if self.kind == "linear":
            return Z @ self.coef_ + self.intercept_
        if len(self.dual_coef_) == 0:
            return np.zeros(len(Z))
        return self._kernel(Z, self.support_) @ self.dual_coef_

    def predict(self, X) -> np.ndarray:
        f = self.decision_function(X)
        f = np.where(f == 0, self.majority_, f)
        return np.where(f > 0, self.classes_[1], self.classes_[0])


def train_classifier(features, labels, grid=None, seed: int = 0, inner_folds: int = 3):
    """Grid-search a :class:`MarginClassifier` by inner stratified CV accuracy.

    Returns ``(fitted best estimator, best mean inner-CV accuracy)``.
    """
    X, y = check_X_y(features, labels, dtype=np.float64)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    if len(y) < 4:
        raise ValueError("need at least 4 samples")
    folds = max(2, min(inner_folds, int(counts.min())))
    search = GridSearchCV(
        MarginClassifier(),
        grid or DEFAULT_GRID,
        scoring="accuracy",
        cv=StratifiedKFold(folds, shuffle=True, random_state=seed),
        error_score="raise",
    )
    search.fit(X, y)
    return search.best_estimator_, float(search.best_score_)
