"""Topology-constrained normalization loss.

For a template ``T`` produced from one subject and a random subset ``S`` of
training subjects the loss is::

    sum_v  lambda_v * sum_{i in S} ||T - X_i^v||_F
         + beta * skl(strength(T), mean_{i in S} strength(X_i^v))

where ``skl`` is the base-2 symmetric KL divergence and ``lambda_v`` rescales
each view by its inverse mean edge weight relative to the smallest mean.

The public functions accept arrays or :class:`~graphnorm.autodiff.Tensor`
inputs. Array inputs return plain floats/arrays; tensor inputs return tensors
so the loss can be differentiated.
"""
from __future__ import annotations

import numpy as np

from . import autodiff as ad

EPSILON = 1e-8


class DegenerateGraphError(ValueError):
    pass


def _is_tensor(*xs) -> bool:
    return any(isinstance(x, ad.Tensor) for x in xs)


def _out(result: ad.Tensor, differentiable: bool):
    if differentiable:
        return result
    v = result.value
    return float(v) if v.ndim == 0 else v


def view_norm_weights(X) -> np.ndarray:
    """Per-view weights ``(1/mu_v) / max_j (1/mu_j)`` from off-diagonal means.

    ``X`` has shape (n_samples, n_r, n_r, n_v) or is a sequence of samples.
    """
    X = np.asarray([getattr(s, "views", s) for s in X], dtype=np.float64) if not isinstance(X, np.ndarray) else X
    if X.ndim == 3:
        X = X[None]
    n_r = X.shape[1]
    if X.shape[0] < 1:
        raise ValueError("need at least one sample")
    off = ~np.eye(n_r, dtype=bool)
    mu = X[:, off, :].mean(axis=(0, 1))
    return lambda_from_means(mu)


def lambda_from_means(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=np.float64)
    if (mu <= 0).any():
        v = int(np.flatnonzero(mu <= 0)[0])
        raise ValueError(f"view {v} has zero mean edge weight")
    inv = 1.0 / mu
    return inv / inv.max()


def sample_subset(train_indices, size: int, rng: np.random.Generator) -> np.ndarray:
    train_indices = np.asarray(train_indices)
    if size > len(train_indices):
        raise ValueError(f"subset size {size} exceeds {len(train_indices)} available samples")
    return train_indices[rng.choice(len(train_indices), size=size, replace=False)]


def centeredness_loss(template, subset_views, lambda_v: float = 1.0):
    """``lambda_v * sum_i ||T - X_i||_F`` over subset views of shape (m, n_r, n_r)."""
    diff_tensor = _is_tensor(template)
    T = ad.as_tensor(template)
    Xs = np.asarray(subset_views, dtype=np.float64)
    if Xs.ndim == 2:
        Xs = Xs[None]
    if Xs.shape[1:] != T.shape[-2:]:
        raise ad.ShapeError(f"template shape {T.shape} does not match views {Xs.shape[1:]}")
    loss = ad.sum(ad.frobenius_norm(T - Xs, axis=(-2, -1))) * float(lambda_v)
    return _out(loss, diff_tensor)


def _strength_tensor(A: ad.Tensor, epsilon: float) -> ad.Tensor:
    k = ad.sum(A, axis=-1)
    total = ad.sum(k, axis=-1, keepdims=True)
    if (total.value <= 0).any():
        raise DegenerateGraphError("degenerate graph: total node strength is zero")
    n_r = A.shape[-1]
    return (k / total + epsilon) * (1.0 / (1.0 + n_r * epsilon))


def strength_distribution(matrix, epsilon: float = EPSILON):
    """Row sums normalized to a distribution, then ``(p + eps) / (1 + n eps)``.

    Works on a single matrix or on any stack of matrices (last two axes).
    """
    diff_tensor = _is_tensor(matrix)
    A = ad.as_tensor(matrix)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ad.ShapeError(f"expected square matrices, got shape {A.shape}")
    return _out(_strength_tensor(A, epsilon), diff_tensor)


def ground_truth_distribution(subset_views, epsilon: float = EPSILON) -> np.ndarray:
    """Mean strength distribution over matrices of shape (m, n_r, n_r)."""
    Xs = np.asarray(subset_views, dtype=np.float64)
    if Xs.ndim == 2:
        Xs = Xs[None]
    if Xs.shape[0] == 0:
        raise ValueError("subset is empty")
    p = strength_distribution(Xs, epsilon).mean(axis=0)
    return p / p.sum()


def symmetric_kl(t, x):
    """``KL(t||x) + KL(x||t)`` in bits, summed over the last axis."""
    diff_tensor = _is_tensor(t, x)
    t, x = ad.as_tensor(t), ad.as_tensor(x)
    forward = ad.sum(t * ad.log2(t / x), axis=-1)
    reverse = ad.sum(x * ad.log2(x / t), axis=-1)
    out = forward + reverse
    if not np.isfinite(out.value).all():
        raise FloatingPointError("symmetric KL is not finite")
    return _out(out, diff_tensor)


def tcnl_terms(templates: ad.Tensor, subsets: np.ndarray, truths: np.ndarray, lam, beta: float):
    """Batched loss pieces.

    templates: (B, n_r, n_r); subsets: (B, m, n_r, n_r, n_v) comparison views;
    truths: (B, n_v, n_r) ground-truth strength distributions per view.
    Returns per-subject (centeredness, kl) tensors of shape (B,); the loss is
    ``centeredness + beta * kl``. With ``beta == 0`` the KL term is skipped
    and reported as zeros.
    """
    lam = np.asarray(lam, dtype=np.float64)
    B = templates.shape[0]
    T = ad.reshape(templates, (B, 1) + templates.shape[1:] + (1,))
    dist = ad.frobenius_norm(T - subsets, axis=(2, 3))  # (B, m, n_v)
    center = ad.sum(dist * lam, axis=(1, 2))
    if beta == 0:
        return center, ad.Tensor(np.zeros(B))
    t = _strength_tensor(templates, EPSILON)  # (B, n_r)
    t = ad.reshape(t, (t.shape[0], 1, t.shape[1]))
    kl = ad.sum(symmetric_kl(t, ad.Tensor(truths)), axis=1)
    return center, kl


def tcnl(template, subset_samples, lam, beta: float):
    """Loss of one template against comparison samples of shape (m, n_r, n_r, n_v)."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    diff_tensor = _is_tensor(template)
    T = ad.as_tensor(template)
    Xs = np.asarray([getattr(s, "views", s) for s in subset_samples], dtype=np.float64)
    if Xs.ndim != 4 or Xs.shape[1:3] != T.shape:
        raise ad.ShapeError(f"template shape {T.shape} does not match samples {Xs.shape}")
    truths = np.stack([ground_truth_distribution(Xs[..., v]) for v in range(Xs.shape[3])])
    center, kl = tcnl_terms(ad.reshape(T, (1,) + T.shape), Xs[None], truths[None], lam, beta)
    total = ad.sum(center + kl * float(beta)) if beta else ad.sum(center)
    return _out(total, diff_tensor)
