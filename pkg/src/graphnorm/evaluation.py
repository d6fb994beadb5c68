"""Template evaluation: centeredness, baselines, discriminative edge selection."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classifier import DEFAULT_GRID, train_classifier
from .netdata import Population, split_folds


def _stack(samples) -> np.ndarray:
    if hasattr(samples, "tensor"):
        return samples.tensor()
    X = np.asarray([getattr(s, "views", s) for s in samples], dtype=np.float64)
    return X[None] if X.ndim == 3 else X


def centeredness_score(template, samples) -> tuple[np.ndarray, float]:
    """Per-view and overall mean Frobenius distance from ``template`` to the views."""
    X = _stack(samples)
    if X.shape[0] == 0:
        raise ValueError("test set is empty")
    T = np.asarray(template, dtype=np.float64)
    if T.shape != X.shape[1:3]:
        raise ValueError(f"template shape {T.shape} does not match samples {X.shape[1:3]}")
    dist = np.sqrt(((T[None, :, :, None] - X) ** 2).sum(axis=(1, 2)))  # (n_samples, n_v)
    return dist.mean(axis=0), float(dist.mean())


def baseline_template(samples, method: str = "mean") -> np.ndarray:
    """Entrywise mean or median across every (subject, view) matrix."""
    X = _stack(samples)
    flat = np.moveaxis(X, 3, 1).reshape(-1, X.shape[1], X.shape[2])
    if method == "mean":
        return flat.mean(axis=0)
    if method == "median":
        return np.median(flat, axis=0)
    raise ValueError(f"unknown baseline method {method!r}")


@dataclass
class DiscriminativenessMatrix:
    scores: np.ndarray
    alpha: float


@dataclass
class EdgeSelection:
    edges: list[tuple[int, int]]
    scores: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.edges)


def _offdiag_mean(T: np.ndarray) -> float:
    return float(T[~np.eye(T.shape[0], dtype=bool)].mean())


def discriminativeness(T_A, T_B, residual: str = "entrywise") -> DiscriminativenessMatrix:
    """Max alteration ratio plus ``alpha`` times the residual, per edge.

    ``alpha = 2 / (mu_A + mu_B)`` with off-diagonal template means. The ratio
    is set to 0 where either entry is 0. ``residual="frobenius"`` adds the
    matrix-level norm ``||T_A - T_B||_F`` to every edge instead.
    """
    A = np.asarray(T_A, dtype=np.float64)
    B = np.asarray(T_B, dtype=np.float64)
    if A.shape != B.shape:
        raise ValueError(f"templates differ in shape: {A.shape} vs {B.shape}")
    mu = _offdiag_mean(A) + _offdiag_mean(B)
    if mu <= 0:
        raise ValueError("both templates are identically zero")
    alpha = 2.0 / mu
    ok = (A > 0) & (B > 0)
    safe_a, safe_b = np.where(ok, A, 1.0), np.where(ok, B, 1.0)
    ratio = np.where(ok, np.maximum(safe_a / safe_b, safe_b / safe_a), 0.0)
    if residual == "entrywise":
        resid = np.abs(A - B)
    elif residual == "frobenius":
        resid = np.full_like(A, np.linalg.norm(A - B))
    else:
        raise ValueError(f"unknown residual mode {residual!r}")
    scores = ratio + alpha * resid
    np.fill_diagonal(scores, 0.0)
    return DiscriminativenessMatrix(scores, alpha)


def top_k(scores, k: int) -> EdgeSelection:
    """Highest-scoring undirected edges (i < j); ties go to the smaller (i, j)."""
    S = scores.scores if isinstance(scores, DiscriminativenessMatrix) else np.asarray(scores)
    n = S.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    if not 1 <= k <= len(iu):
        raise ValueError(f"k must lie in [1, {len(iu)}], got {k}")
    vals = S[iu, ju]
    # lexsort: last key is primary; triu order is already lexicographic
    order = np.lexsort((np.arange(len(vals)), -vals))[:k]
    return EdgeSelection([(int(iu[o]), int(ju[o])) for o in order], [float(vals[o]) for o in order])


def extract_features(samples, selection: EdgeSelection) -> np.ndarray:
    """Rows of concatenated cross-view edge vectors, edge-major then view."""
    X = _stack(samples)
    n_r = X.shape[1]
    for i, j in selection.edges:
        if not (0 <= i < n_r and 0 <= j < n_r) or i == j:
            raise ValueError(f"invalid edge ({i}, {j}) for n_r={n_r}")
    rows = np.array([i for i, _ in selection.edges], dtype=int)
    cols = np.array([j for _, j in selection.edges], dtype=int)
    return X[:, rows, cols, :].reshape(X.shape[0], -1)


@dataclass
class ClassificationReport:
    k_values: list[int]
    accuracy: np.ndarray  # (n_folds, n_k)
    selections: list[dict[int, EdgeSelection]]
    scores: list[np.ndarray] = field(default_factory=list)  # per-fold discriminativeness

    def mean_scores(self) -> np.ndarray:
        return np.mean(self.scores, axis=0)

    @property
    def mean(self) -> float:
        return float(self.accuracy.mean())

    @property
    def std(self) -> float:
        return float(self.accuracy.std())

    def rows(self):
        for fold, accs in enumerate(self.accuracy):
            for k, acc in zip(self.k_values, accs):
                yield fold, k, float(acc)


Integrator = Callable[[np.ndarray, int], np.ndarray]


def mean_integrator(X: np.ndarray, fold: int) -> np.ndarray:
    return baseline_template(X, "mean")


def classification_protocol(
    population_A: Population,
    population_B: Population,
    integrator: Integrator = mean_integrator,
    k_values: Sequence[int] = (5, 10, 15, 20, 25),
    n_folds: int = 5,
    seed: int = 0,
    grid=None,
    residual: str = "entrywise",
) -> ClassificationReport:
    """Per fold: integrate each class's training subjects, rank edges, classify.

    ``integrator(X_train, fold)`` maps stacked training samples of one class
    to a template. Folds are stratified over the pooled A+B population.
    """
    if (population_A.n_r, population_A.n_v) != (population_B.n_r, population_B.n_v):
        raise ValueError("populations differ in (n_r, n_v)")
    X = np.concatenate([population_A.tensor(), population_B.tensor()])
    y = np.array([0] * len(population_A) + [1] * len(population_B))
    folds = split_folds([str(v) for v in y], n_folds, seed)
    acc = np.zeros((n_folds, len(k_values)))
    selections, fold_scores = [], []
    for fold in range(n_folds):
        train = np.array(folds.train_indices(fold))
        test = np.array(folds.test_indices(fold))
        T_A = integrator(X[train[y[train] == 0]], fold)
        T_B = integrator(X[train[y[train] == 1]], fold)
        scores = discriminativeness(T_A, T_B, residual)
        fold_scores.append(scores.scores)
        chosen = {}
        for col, k in enumerate(k_values):
            sel = top_k(scores, k)
            chosen[k] = sel
            clf, _ = train_classifier(extract_features(X[train], sel), y[train], grid or DEFAULT_GRID, seed + fold)
            acc[fold, col] = clf.score(extract_features(X[test], sel), y[test])
        selections.append(chosen)
    return ClassificationReport(list(k_values), acc, selections, fold_scores)
