"""Full-batch Adam training, early stopping, median refinement and k-fold CV."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .gnn import ModelParams, forward_batch, forward_tensors, init_model
from .loss import EPSILON, lambda_from_means, strength_distribution, tcnl_terms
from .netdata import FoldAssignment, Population, split_folds

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.0006
    adam_beta1: float = 0.9
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8
    max_epochs: int = 1200
    patience: int = 50
    subset_size: int = 10
    beta: float = 25.0
    dims: tuple[int, int, int] = (36, 24, 5)
    hidden: int = 32
    seed: int = 0
    readout: str = "mean"

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)

    def validate(self) -> None:
        if self.lr < 0 or self.beta < 0:
            raise ValueError("lr and beta must be nonnegative")
        if self.max_epochs < 1 or self.patience < 1 or self.subset_size < 1:
            raise ValueError("max_epochs, patience and subset_size must be positive")
        if self.patience >= self.max_epochs:
            raise ValueError(f"patience ({self.patience}) must be smaller than max_epochs ({self.max_epochs})")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam decay rates must lie in [0, 1)")
        if len(self.dims) != 3 or min(self.dims) < 1 or self.hidden < 1:
            raise ValueError(f"invalid architecture dims={self.dims}, hidden={self.hidden}")
        if self.readout not in ("mean", "sum"):
            raise ValueError(f"readout must be 'mean' or 'sum', got {self.readout!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    test_loss: float
    train_centeredness: float
    train_kl: float
    elapsed_ms: float


@dataclass
class TrainResult:
    model: ModelParams
    history: list[EpochRecord]
    stopped_epoch: int
    best_epoch: int
    refined_template: np.ndarray
    lambdas: np.ndarray

    @property
    def best_test_loss(self) -> float:
        return self.history[self.best_epoch - 1].test_loss


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState, config: TrainConfig, t: int):
    """One bias-corrected Adam update; returns (new params, state)."""
    if t < 1:
        raise ValueError(f"step index must be >= 1, got {t}")
    b1, b2 = config.adam_beta1, config.adam_beta2
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ad.ShapeError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient for parameter {name}")
        m = b1 * state.m.get(name, np.zeros_like(p)) + (1 - b1) * g
        v = b2 * state.v.get(name, np.zeros_like(p)) + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        out[name] = p - config.lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return out, state


class _LossContext:
    """Precomputed per-view statistics of the training set."""

    def __init__(self, X_train: np.ndarray):
        self.X = X_train
        n_r = X_train.shape[1]
        off = ~np.eye(n_r, dtype=bool)
        self.lam = lambda_from_means(X_train[:, off, :].mean(axis=(0, 1)))
        # (N, n_v, n_r) smoothed strength distributions of every training view
        self.strengths = strength_distribution(np.moveaxis(X_train, 3, 1), EPSILON)

    def comparison(self, subsets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Views (B, m, n_r, n_r, n_v) and ground truths (B, n_v, n_r) for index rows."""
        truths = self.strengths[subsets].mean(axis=1)
        truths = truths / truths.sum(axis=-1, keepdims=True)
        return self.X[subsets], truths


def loss_and_grads(model: ModelParams, X: np.ndarray, subsets: np.ndarray, ctx: _LossContext, beta: float, need_grad: bool = True):
    """Mean loss over the rows of ``X`` and its gradient w.r.t. every parameter."""
    leaves = {k: ad.Tensor(v, requires_grad=need_grad, name=k) for k, v in model.named_arrays().items()}
    _, templates = forward_tensors(leaves, X, model.readout)
    views, truths = ctx.comparison(subsets)
    center, kl = tcnl_terms(templates, views, truths, ctx.lam, beta)
    per_subject = center + kl * beta if beta else center
    total = ad.mean(per_subject)
    if not np.isfinite(total.value):
        raise TrainingError("non-finite loss")
    grads = None
    if need_grad:
        got = ad.backward(total)
        grads = {k: got.get(t, np.zeros_like(t.value)) for k, t in leaves.items()}
    return float(total.value), float(center.value.mean()), float(kl.value.mean()), grads


def refine(model: ModelParams, X_train) -> np.ndarray:
    """Element-wise median of the subject-biased templates."""
    if hasattr(X_train, "tensor"):
        X_train = X_train.tensor()
    _, templates = forward_batch(model, X_train)
    return np.median(templates, axis=0)


def train_fold(
    X_train,
    X_test,
    config: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainResult:
    """Train one model; keep the parameters with the lowest test loss.

    Each epoch draws a fresh comparison subset for every training subject,
    averages the per-subject losses, and takes one Adam step. The test loss
    compares each test subject's template with the whole training set.
    """
    config.validate()
    X_train = X_train.tensor() if hasattr(X_train, "tensor") else np.asarray(X_train, dtype=np.float64)
    X_test = X_test.tensor() if hasattr(X_test, "tensor") else np.asarray(X_test, dtype=np.float64)
    n_train = X_train.shape[0]
    if config.subset_size > n_train:
        raise TrainingError(f"subset_size {config.subset_size} exceeds {n_train} training samples")
    ctx = _LossContext(X_train)
    model = init_model(config.dims, X_train.shape[3], config.hidden, config.seed, config.readout)
    rng = np.random.default_rng([config.seed, 2])
    test_subsets = np.tile(np.arange(n_train), (X_test.shape[0], 1))

    params = model.named_arrays()
    state = AdamState()
    best_loss, best_params, best_epoch, stale = np.inf, params, 0, 0
    history: list[EpochRecord] = []
    start = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        subsets = np.stack([rng.choice(n_train, size=config.subset_size, replace=False) for _ in range(n_train)])
        loss, center, kl, grads = loss_and_grads(model.with_arrays(params), X_train, subsets, ctx, config.beta)
        params, state = adam_step(params, grads, state, config, epoch)
        test_loss = loss_and_grads(model.with_arrays(params), X_test, test_subsets, ctx, config.beta, need_grad=False)[0]
        record = EpochRecord(epoch, loss, test_loss, center, kl, (time.perf_counter() - start) * 1e3)
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if test_loss < best_loss:
            best_loss, best_params, best_epoch, stale = test_loss, params, epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    best = model.with_arrays(best_params)
    best.meta = {"best_epoch": best_epoch, "beta": config.beta}
    logger.info("stopped at epoch %d, best epoch %d (test loss %.6g)", epoch, best_epoch, best_loss)
    return TrainResult(best, history, epoch, best_epoch, refine(best, X_train), ctx.lam)


@dataclass
class CVReport:
    folds: FoldAssignment
    results: list[TrainResult]
    centeredness: list[float]
    config: dict

    @property
    def mean_centeredness(self) -> float:
        return float(np.mean(self.centeredness))


def _fold_job(args):
    X, folds, fold, config = args
    cfg = TrainConfig(**{**asdict(config), "seed": config.seed + fold})
    return train_fold(X[folds.train_indices(fold)], X[folds.test_indices(fold)], cfg)


def run_cv(population: Population, k: int, config: TrainConfig, jobs: int = 1, folds: FoldAssignment | None = None) -> CVReport:
    """One model per fold, fold seeds ``config.seed + fold``.

    The report's centeredness is the mean Frobenius distance of each fold's
    refined template to that fold's held-out views.
    """
    from .evaluation import centeredness_score

    folds = folds or split_folds(population, k, config.seed)
    X = population.tensor()
    jobs_args = [(X, folds, f, config) for f in range(folds.k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fold_job, jobs_args))
    else:
        results = [_fold_job(a) for a in jobs_args]
    scores = [centeredness_score(r.refined_template, X[folds.test_indices(f)])[1] for f, r in enumerate(results)]
    return CVReport(folds, results, scores, asdict(config))
