"""Input checks shared by the estimators and the dataset loader."""
from __future__ import annotations

import numpy as np


class InvalidGraphError(ValueError):
    pass


def check_view(matrix, where: str = "matrix") -> np.ndarray:
    """Validate one symmetric, nonnegative, zero-diagonal adjacency matrix."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidGraphError(f"{where}: expected a square matrix, got shape {a.shape}")
    bad = ~np.isfinite(a)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise InvalidGraphError(f"{where}: non-finite entry {a[i, j]} at ({i}, {j})")
    if (a < 0).any():
        i, j = np.unravel_index(np.argmin(a), a.shape)
        raise InvalidGraphError(f"{where}: negative entry {a[i, j]!r} at ({i}, {j})")
    asym = np.abs(a - a.T)
    if asym.max(initial=0.0) > 0:
        i, j = np.unravel_index(np.argmax(asym), a.shape)
        raise InvalidGraphError(
            f"{where}: asymmetric matrix, worst entry ({i}, {j}) = {a[i, j]!r} vs ({j}, {i}) = {a[j, i]!r}"
        )
    diag = np.diag(a)
    if (diag != 0).any():
        i = int(np.flatnonzero(diag)[0])
        raise InvalidGraphError(f"{where}: nonzero diagonal entry {diag[i]!r} at ({i}, {i})")
    return a


def check_multiview(X, n_views: int | None = None) -> np.ndarray:
    """Return ``X`` as a float array of shape (n_samples, n_r, n_r, n_v).

    A single sample of shape (n_r, n_r, n_v) is promoted to a batch of one.
    Every view of every sample must pass :func:`check_view`.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[1] != X.shape[2]:
        raise InvalidGraphError(f"expected shape (n_samples, n_r, n_r, n_v), got {X.shape}")
    if X.shape[0] < 1:
        raise InvalidGraphError("need at least one sample")
    if n_views is not None and X.shape[3] != n_views:
        raise InvalidGraphError(f"expected {n_views} views, got {X.shape[3]}")
    if np.isfinite(X).all() and (X >= 0).all() and (X == np.swapaxes(X, 1, 2)).all():
        if (np.diagonal(X, axis1=1, axis2=2) == 0).all():
            return X
    # slow path only to produce a precise message
    for s in range(X.shape[0]):
        for v in range(X.shape[3]):
            check_view(X[s, :, :, v], where=f"sample {s}, view {v}")
    return X


def check_template(T) -> np.ndarray:
    return check_view(T, where="template")
