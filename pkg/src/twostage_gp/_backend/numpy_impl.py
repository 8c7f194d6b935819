"""Pure-numpy backend for the hot numerical kernels.

Mirrors the compiled core in ``_core.pyx``; both expose the same three
entry points. Matrices returned by ``base_matrix`` are exactly symmetric
with a unit diagonal when ``Y is None``.
"""

import numpy as np

NAME = "numpy"

RBF = 0
MATERN32 = 1
MATERN12 = 2

_SQRT3 = np.sqrt(3.0)


def _sq_dists(X, Y=None):
    # ||a||^2 + ||b||^2 - 2 a.b, clamped at 0; symmetrized when Y is None
    xn = np.einsum("ij,ij->i", X, X)
    if Y is None:
        D = xn[:, None] + xn[None, :] - 2.0 * (X @ X.T)
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
    else:
        yn = np.einsum("ij,ij->i", Y, Y)
        D = xn[:, None] + yn[None, :] - 2.0 * (X @ Y.T)
    np.maximum(D, 0.0, out=D)
    return D


def base_matrix(code, lengthscale, X, Y=None):
    """Base correlation matrix c(x_i, y_j) for one kernel family."""
    D2 = _sq_dists(X, Y)
    if code == RBF:
        C = np.exp(-D2 / (lengthscale * lengthscale))
    elif code == MATERN32:
        A = _SQRT3 * np.sqrt(D2) / lengthscale
        C = (1.0 + A) * np.exp(-A)
    elif code == MATERN12:
        C = np.exp(-np.sqrt(D2) / lengthscale)
    else:
        raise ValueError(f"unknown kernel code {code}")
    if Y is None:
        np.fill_diagonal(C, 1.0)
    return C


def base_and_dl(code, lengthscale, X):
    """Base matrix plus its entrywise derivative w.r.t. the lengthscale."""
    D2 = _sq_dists(X)
    l = lengthscale
    if code == RBF:
        C = np.exp(-D2 / (l * l))
        dC = C * (2.0 * D2 / (l ** 3))
    elif code == MATERN32:
        D = np.sqrt(D2)
        E = np.exp(-_SQRT3 * D / l)
        C = (1.0 + _SQRT3 * D / l) * E
        dC = (3.0 * D2 / (l ** 3)) * E
    elif code == MATERN12:
        D = np.sqrt(D2)
        C = np.exp(-D / l)
        dC = C * (D / (l * l))
    else:
        raise ValueError(f"unknown kernel code {code}")
    np.fill_diagonal(C, 1.0)
    np.fill_diagonal(dC, 0.0)
    return C, dC


def fps(X, k):
    """Greedy max-min design: start nearest the centroid, ties to the
    lowest index. Returns (indices, max-of-min distance per step)."""
    n = X.shape[0]
    centroid = X.mean(axis=0)
    start = int(np.argmin(np.einsum("ij,ij->i", X - centroid, X - centroid)))
    indices = np.empty(k, dtype=np.int64)
    trace = np.empty(k, dtype=np.float64)
    indices[0] = start
    trace[0] = np.inf
    d = np.full(n, np.inf)
    last = start
    for step in range(1, k):
        diff = X - X[last]
        np.minimum(d, np.sqrt(np.einsum("ij,ij->i", diff, diff)), out=d)
        last = int(np.argmax(d))
        indices[step] = last
        trace[step] = d[last]
    return indices, trace
