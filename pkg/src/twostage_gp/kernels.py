"""Kernel families, covariance matrices, and hyperparameter derivatives.

Three stationary families are provided: RBF, Matérn-3/2, and Matérn-1/2,
each a function of the Euclidean distance with a single shared
lengthscale. The RBF convention here is ``exp(-||xi - xj||^2 / l^2)``
(no 1/2 factor in the exponent).

The full covariance is ``k(xi, xj) = sigma_f^2 c(xi, xj) + sigma_n^2 delta_ij``,
so the observation noise lives on the diagonal of the Gram matrix and in
the prior variance of any single point.

Hyperparameters are stored as unconstrained raw values and mapped through
softplus, so a raw value of 0 gives the constrained default ln 2 ~ 0.6931
and gradient-based optimizers can step freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _backend
from .exceptions import InputError


class KernelFamily(Enum):
    """Supported base kernel families."""

    RBF = "rbf"
    MATERN32 = "matern32"
    MATERN12 = "matern12"

    @classmethod
    def from_name(cls, name: str) -> "KernelFamily":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(f.value for f in cls)
            raise InputError(f"unknown kernel family {name!r}; expected one of {valid}") from None

    @property
    def code(self) -> int:
        return _FAMILY_CODES[self]


_FAMILY_CODES = {
    KernelFamily.RBF: _backend.RBF,
    KernelFamily.MATERN32: _backend.MATERN32,
    KernelFamily.MATERN12: _backend.MATERN12,
}


def softplus(x):
    """log(1 + e^x), numerically stable for large |x|."""
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    """Inverse of softplus; requires y > 0."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0.0):
        raise InputError("softplus_inv requires strictly positive input")
    # log(e^y - 1) = y + log(1 - e^-y)
    return y + np.log(-np.expm1(-y))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class Hyperparameters:
    """Lengthscale, outputscale, and noise scale in raw (pre-softplus) form.

    The constrained values ``softplus(raw)`` are strictly positive for any
    finite raw value; all three default to ln 2.
    """

    raw_lengthscale: float = 0.0
    raw_outputscale: float = 0.0
    raw_noise: float = 0.0

    @classmethod
    def from_constrained(cls, lengthscale, outputscale, noise) -> "Hyperparameters":
        return cls(
            raw_lengthscale=float(softplus_inv(lengthscale)),
            raw_outputscale=float(softplus_inv(outputscale)),
            raw_noise=float(softplus_inv(noise)),
        )

    @property
    def lengthscale(self) -> float:
        return float(softplus(self.raw_lengthscale))

    @property
    def outputscale(self) -> float:
        return float(softplus(self.raw_outputscale))

    @property
    def noise(self) -> float:
        return float(softplus(self.raw_noise))

    def raw_vector(self) -> np.ndarray:
        return np.array([self.raw_lengthscale, self.raw_outputscale, self.raw_noise])

    @classmethod
    def from_raw_vector(cls, raw) -> "Hyperparameters":
        raw = np.asarray(raw, dtype=float)
        return cls(float(raw[0]), float(raw[1]), float(raw[2]))

    def constrained_vector(self) -> np.ndarray:
        return np.array([self.lengthscale, self.outputscale, self.noise])


@dataclass
class KernelSpec:
    """A kernel family plus its hyperparameters; fully determines k(.,.)."""

    family: KernelFamily = KernelFamily.RBF
    params: Hyperparameters = field(default_factory=Hyperparameters)

    def with_params(self, params: Hyperparameters) -> "KernelSpec":
        return KernelSpec(self.family, params)


def _check_matrix(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] < 1:
        raise InputError(f"{name} must be a non-empty matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(X)


def eval_base(family: KernelFamily, lengthscale: float, xi, xj) -> float:
    """Evaluate the base correlation c(xi, xj) for one pair of points.

    Parameters
    ----------
    family : KernelFamily
    lengthscale : float
        Shared lengthscale, must be positive.
    xi, xj : array_like
        Points of equal dimension.

    Returns
    -------
    float
        c(xi, xj) in (0, 1]; equals 1 at zero distance.
    """
    if lengthscale <= 0 or not np.isfinite(lengthscale):
        raise InputError(f"lengthscale must be positive, got {lengthscale}")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    if xi.shape != xj.shape:
        raise InputError(f"point dimensions differ: {xi.shape} vs {xj.shape}")
    if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(xj))):
        raise InputError("points contain non-finite entries")
    C = _backend.base_matrix(family.code, lengthscale, xi[None, :], xj[None, :])
    return float(C[0, 0])


def gram_matrix(spec: KernelSpec, X, include_noise: bool = True) -> np.ndarray:
    """Covariance matrix of the training inputs.

    K[i, j] = sigma_f^2 c(x_i, x_j) plus sigma_n^2 on the diagonal when
    ``include_noise``. Exactly symmetric; the diagonal is exactly
    sigma_f^2 (+ sigma_n^2).
    """
    X = _check_matrix(X)
    p = spec.params
    C = _backend.base_matrix(spec.family.code, p.lengthscale, X)
    K = (p.outputscale ** 2) * C
    if include_noise:
        K[np.diag_indices_from(K)] += p.noise ** 2
    return K


def cross_matrix(spec: KernelSpec, X_star, X) -> np.ndarray:
    """Cross-covariance sigma_f^2 c(x_star_i, x_j); never includes noise."""
    X_star = _check_matrix(X_star, "X_star")
    X = _check_matrix(X)
    if X_star.shape[1] != X.shape[1]:
        raise InputError(
            f"dimension mismatch: queries have d={X_star.shape[1]}, training d={X.shape[1]}"
        )
    p = spec.params
    return (p.outputscale ** 2) * _backend.base_matrix(
        spec.family.code, p.lengthscale, X_star, X
    )


def gram_gradients(spec: KernelSpec, X):
    """Entrywise derivatives of the noisy Gram matrix w.r.t. raw parameters.

    Returns
    -------
    (dK_dl, dK_df, dK_dn) : tuple of ndarray
        Derivatives with respect to raw lengthscale, raw outputscale and
        raw noise, each chained through softplus.
    """
    X = _check_matrix(X)
    p = spec.params
    C, dC_dl = _backend.base_and_dl(spec.family.code, p.lengthscale, X)
    sf2 = p.outputscale ** 2
    dK_dl = (sf2 * _sigmoid(p.raw_lengthscale)) * dC_dl
    dK_df = (2.0 * p.outputscale * _sigmoid(p.raw_outputscale)) * C
    n = X.shape[0]
    dK_dn = np.zeros((n, n))
    dK_dn[np.diag_indices(n)] = 2.0 * p.noise * _sigmoid(p.raw_noise)
    return dK_dl, dK_df, dK_dn
