"""Subsampling utilities: farthest-point sampling, uniform subsampling,
and deterministic fold generation.

Farthest-point sampling (FPS) greedily builds a quasi-uniform design:
the first point is the one nearest the centroid, then each step picks the
point maximizing its distance to the already-selected set. Ties go to the
lowest index so runs are reproducible. The quality of a design is
summarized by its separation distance q (half the minimal pairwise
distance among selected points) and fill distance h (the largest distance
from any point of the dataset to the selected set).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .exceptions import InputError
from .kernels import _check_matrix


@dataclass
class DesignSample:
    """FPS output: selection order plus the max-of-min distance per step."""

    indices: np.ndarray
    fill_trace: np.ndarray


@dataclass
class FoldSplit:
    """One train/test partition of row indices."""

    train: np.ndarray
    test: np.ndarray
    seed: int


def fps(X, k: int) -> DesignSample:
    """Farthest-point sample k indices from the rows of X.

    ``fill_trace[0]`` is +inf (nothing selected yet); from step 1 on it
    holds the chosen max-of-min Euclidean distance, which is
    non-increasing.
    """
    X = _check_matrix(X)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InputError(f"k must be in [1, {n}], got {k}")
    indices, trace = _backend.fps(X, int(k))
    return DesignSample(indices=np.asarray(indices), fill_trace=np.asarray(trace))


def design_stats(X, indices):
    """Separation and fill distance of a selected subset.

    Returns
    -------
    (q, h) : tuple of float
        q = half the minimal pairwise distance among selected points;
        h = max over all rows of X of the distance to the selected set.
    """
    X = _check_matrix(X)
    idx = np.asarray(indices, dtype=int)
    if idx.size < 2:
        raise InputError("design_stats needs at least 2 selected indices")
    S = X[idx]
    diff = S[:, None, :] - S[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    iu = np.triu_indices(idx.size, k=1)
    q = 0.5 * float(d[iu].min())
    diff_all = X[:, None, :] - S[None, :, :]
    dist_all = np.sqrt(np.einsum("ijk,ijk->ij", diff_all, diff_all))
    h = float(dist_all.min(axis=1).max())
    return q, h


def random_subsample(n: int, k: int, seed: int) -> np.ndarray:
    """k unique indices drawn uniformly without replacement, sorted."""
    if k < 1:
        raise InputError(f"subsample size must be >= 1, got {k}")
    if k > n:
        raise InputError(f"cannot draw {k} from {n} points")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n, size=k, replace=False))


def make_folds(n: int, n_folds: int = 20, train_fraction: float = 0.9, seed_base: int = 0):
    """Independent random train/test splits, one per fold.

    Fold i is seeded by ``seed_base + i``; within each fold the train and
    test indices are disjoint and cover all n rows.
    """
    if n_folds < 1:
        raise InputError(f"n_folds must be >= 1, got {n_folds}")
    if not 0.0 < train_fraction < 1.0:
        raise InputError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = int(round(n * train_fraction))
    if n_train < 1 or n_train >= n:
        raise InputError(
            f"train_fraction {train_fraction} leaves a degenerate split for n={n}"
        )
    folds = []
    for i in range(n_folds):
        rng = np.random.default_rng(seed_base + i)
        perm = rng.permutation(n)
        folds.append(
            FoldSplit(
                train=np.sort(perm[:n_train]),
                test=np.sort(perm[n_train:]),
                seed=seed_base + i,
            )
        )
    return folds
