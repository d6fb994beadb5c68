"""scikit-learn style wrappers around the template integrators.

Inputs are stacked multi-view graphs of shape (n_samples, n_r, n_r, n_v).
``fit`` learns a population template (``template_``); ``transform`` maps
samples to subject-level templates of shape (n_samples, n_r, n_r).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_is_fitted

from ._validation import check_multiview
from .evaluation import baseline_template, centeredness_score, discriminativeness, extract_features, top_k
from .gnn import forward_batch
from .trainer import TrainConfig, train_fold


class _TemplateMixin:
    def _check_input(self, X, reset: bool) -> np.ndarray:
        X = check_multiview(X, None if reset else self.n_views_in_)
        if reset:
            self.n_nodes_in_, self.n_views_in_ = X.shape[1], X.shape[3]
        elif X.shape[1] != self.n_nodes_in_:
            raise ValueError(f"X has {X.shape[1]} nodes, fitted with {self.n_nodes_in_}")
        return X

    def score(self, X, y=None) -> float:
        """Negative mean Frobenius distance of ``template_`` to every view."""
        check_is_fitted(self, "template_")
        return -centeredness_score(self.template_, self._check_input(X, reset=False))[1]


class MGNNet(_TemplateMixin, TransformerMixin, BaseEstimator):
    """Edge-conditioned GNN trained to map each sample onto a population template.

    ``beta=0`` drops the node-strength KL term (the centeredness-only
    ablation). ``fit`` accepts an optional held-out set for early stopping;
    without one the training set itself is monitored.
    """

    def __init__(
        self,
        dims=(36, 24, 5),
        hidden=32,
        beta=25.0,
        lr=0.0006,
        adam_beta1=0.9,
        adam_beta2=0.99,
        max_epochs=1200,
        patience=50,
        subset_size=10,
        readout="mean",
        random_state=0,
    ):
        self.dims = dims
        self.hidden = hidden
        self.beta = beta
        self.lr = lr
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.max_epochs = max_epochs
        self.patience = patience
        self.subset_size = subset_size
        self.readout = readout
        self.random_state = random_state

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            max_epochs=self.max_epochs,
            patience=self.patience,
            subset_size=self.subset_size,
            beta=self.beta,
            dims=tuple(self.dims),
            hidden=self.hidden,
            seed=int(self.random_state or 0),
            readout=self.readout,
        )

    def fit(self, X, y=None, X_val=None):
        X = self._check_input(X, reset=True)
        X_val = X if X_val is None else self._check_input(X_val, reset=False)
        result = train_fold(X, X_val, self.train_config())
        self.model_ = result.model
        self.template_ = result.refined_template
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        self.lambda_ = result.lambdas
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return forward_batch(self.model_, self._check_input(X, reset=False))[1]


class BaselineIntegrator(_TemplateMixin, TransformerMixin, BaseEstimator):
    """Entrywise mean or median over every view of every training sample."""

    def __init__(self, method="mean"):
        self.method = method

    def fit(self, X, y=None):
        X = self._check_input(X, reset=True)
        self.template_ = baseline_template(X, self.method)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "template_")
        X = self._check_input(X, reset=False)
        return np.repeat(self.template_[None], X.shape[0], axis=0)


class DiscriminativeEdgeSelector(TransformerMixin, BaseEstimator):
    """Pick the ``k`` edges whose class templates differ most; emit their edge vectors.

    ``fit`` integrates each of the two classes with a clone of ``integrator``,
    scores every edge and keeps the top ``k``. ``transform`` returns the
    cross-view features of those edges, so the selector can precede a
    classifier in a :class:`~sklearn.pipeline.Pipeline`.
    """

    def __init__(self, integrator=None, k=10, residual="entrywise"):
        self.integrator = integrator
        self.k = k
        self.residual = residual

    def fit(self, X, y):
        X = check_multiview(X)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if len(self.classes_) != 2:
            raise ValueError(f"need exactly two classes, got {len(self.classes_)}")
        base = self.integrator if self.integrator is not None else BaselineIntegrator()
        self.templates_ = [clone(base).fit(X[y == c]).template_ for c in self.classes_]
        self.scores_ = discriminativeness(*self.templates_, residual=self.residual)
        self.selection_ = top_k(self.scores_, self.k)
        self.n_views_in_ = X.shape[3]
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "selection_")
        return extract_features(check_multiview(X, self.n_views_in_), self.selection_)
