"""Weighted-graph node measures and the KL-based topology comparison.

Neighbourhoods, degrees and triangles only count strictly positive weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .loss import EPSILON

MEASURES = ("strength", "pagerank", "effective_size", "clustering")


@dataclass(frozen=True)
class TopologyProfile:
    measure: str
    p: np.ndarray


def _square(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if (A < 0).any():
        raise ValueError("edge weights must be nonnegative")
    return A


def strength(A) -> np.ndarray:
    return _square(A).sum(axis=1)


def pagerank(A, damping: float = 0.85, max_iter: int = 100, tol: float = 1e-10) -> np.ndarray:
    """Power iteration with weight-proportional transitions and uniform teleport."""
    A = _square(A)
    n = A.shape[0]
    rows = A.sum(axis=1)
    if (rows <= 0).any():
        raise ValueError(f"node {int(np.flatnonzero(rows <= 0)[0])} has no outgoing weight")
    P = A / rows[:, None]
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = damping * (x @ P) + (1.0 - damping) / n
        nxt /= nxt.sum()
        done = np.abs(nxt - x).sum() < tol
        x = nxt
        if done:
            break
    return x


def effective_size(A) -> np.ndarray:
    """Burt's effective size of every node's ego network, weighted form.

    ``e(i) = sum_{j in N(i)} (1 - sum_k p_ik m_jk)`` with ``p`` the
    row-normalized weights and ``m`` weights divided by the row maximum.
    """
    A = _square(A)
    rows = A.sum(axis=1)
    if (rows <= 0).any():
        raise ValueError(f"node {int(np.flatnonzero(rows <= 0)[0])} is isolated")
    P = A / rows[:, None]
    M = A / A.max(axis=1)[:, None]
    redundancy = P @ M.T  # [i, j] = sum_k p_ik m_jk
    neighbours = A > 0
    return np.where(neighbours, 1.0 - redundancy, 0.0).sum(axis=1)


def clustering_coefficient(A) -> np.ndarray:
    """Geometric-mean weighted clustering with weights scaled by the graph maximum."""
    A = _square(A)
    top = A.max()
    if top <= 0:
        raise ValueError("graph has no positive edge")
    w = np.cbrt(A / top)
    deg = (A > 0).sum(axis=1)
    # (w^(1/3) @ w^(1/3) @ w^(1/3))_ii sums over ordered (j, k) triangles through i
    cycles = np.diag(w @ w @ w)
    denom = deg * (deg - 1)
    return np.where(deg >= 2, cycles / np.where(denom > 0, denom, 1), 0.0)


_RAW = {
    "strength": strength,
    "pagerank": pagerank,
    "effective_size": effective_size,
    "clustering": clustering_coefficient,
}


def check_measure(measure: str) -> str:
    if measure not in _RAW:
        raise ValueError(f"unknown measure {measure!r}; valid names: {', '.join(MEASURES)}")
    return measure


def profile(A, measure: str) -> TopologyProfile:
    raw = _RAW[check_measure(measure)](A)
    total = raw.sum()
    if total <= 0:
        raise ValueError(f"{measure} profile sums to zero")
    return TopologyProfile(measure, raw / total)


def _smooth(p: np.ndarray) -> np.ndarray:
    return (p + EPSILON) / (1.0 + p.size * EPSILON)


def kl_divergence(p, q) -> float:
    """``KL(p||q)`` in bits after the same epsilon smoothing used in training."""
    p, q = _smooth(np.asarray(p, dtype=np.float64)), _smooth(np.asarray(q, dtype=np.float64))
    return float(np.sum(p * np.log2(p / q)))


def ground_truth_profile(samples, measure: str) -> np.ndarray:
    """Mean profile over every view of every sample, renormalized."""
    X = np.asarray([getattr(s, "views", s) for s in samples], dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.shape[0] == 0:
        raise ValueError("need at least one sample")
    g = np.mean([profile(X[s, :, :, v], measure).p for s in range(X.shape[0]) for v in range(X.shape[3])], axis=0)
    return g / g.sum()


def topology_divergence(template, samples, measure: str) -> float:
    """``KL(g||t)`` between held-out ground truth ``g`` and the template profile ``t``."""
    g = ground_truth_profile(samples, measure)
    t = profile(template, measure).p
    return kl_divergence(g, t)
