"""Exact GP posterior prediction, scaled NLL with analytic gradient, and
kernel ridge regression with cross-validation for the stage-one mean.

All linear solves go through a Cholesky factorization of the noisy Gram
matrix; no explicit matrix inverse is formed outside of
``cho_solve``-style triangular solves. The training objective is the
per-sample-scaled negative log marginal likelihood

    L = (1/2n) ( r^T K^{-1} r + log det K + n log 2pi ),  r = y - m(X),

whose gradient w.r.t. each raw hyperparameter is
(1/2n) tr( (K^{-1} - a a^T) dK ), with a = K^{-1} r.

Predictive variances include the noise term sigma_n^2, since the kernel
definition places the noise inside k(.,.); the reported test NLL is the
mean per-point Gaussian predictive NLL under that noisy variance (a joint
variant over the full test covariance exists behind ``joint_test_nll``;
the per-point form is the default reporting convention).
"""

from __future__ import annotations

import contextlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla
from threadpoolctl import threadpool_limits

from .exceptions import InputError, NumericalError
from .kernels import Hyperparameters, KernelFamily, KernelSpec, _check_matrix, cross_matrix, gram_matrix, gram_gradients

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)

# Observability hooks: factorizations by matrix size, and how many
# predictive variances were clamped up from tiny negative rounding.
factorization_counts: Counter = Counter()
negative_variance_clamps: int = 0

# Rounding tolerance for predictive variances; anything below -VAR_TOL is
# treated as a genuine numerical failure rather than rounding noise.
VAR_TOL = 1e-8

# Jitter is only a rescue for (nearly) noiseless kernels; above this noise
# level a Cholesky failure is reported as-is.
_JITTER_NOISE_CEILING = 1e-3
_JITTER_SCALE = 1e-6


def reset_factorization_counts():
    factorization_counts.clear()


# Threaded BLAS loses badly to a single thread on sub-1k matrices; the
# training loops hit that regime constantly.
_BLAS_SINGLE_THREAD_CUTOFF = 1024


def blas_scope(n: int):
    """Pin BLAS to one thread while working on small matrices."""
    if n <= _BLAS_SINGLE_THREAD_CUTOFF:
        return threadpool_limits(limits=1)
    return contextlib.nullcontext()


def _cholesky(K: np.ndarray) -> np.ndarray:
    factorization_counts[K.shape[0]] += 1
    return sla.cholesky(K, lower=True, check_finite=False)


def _chol_solve(L: np.ndarray, B: np.ndarray) -> np.ndarray:
    return sla.cho_solve((L, True), B, check_finite=False)


def _chol_inverse_tri(L: np.ndarray) -> np.ndarray:
    """Lower triangle of K^{-1} from its Cholesky factor (LAPACK dpotri).

    The upper triangle of the result is zero; contractions against
    symmetric matrices must double the off-diagonal part.
    """
    inv, info = sla.lapack.dpotri(L, lower=1)
    if info != 0:
        raise NumericalError(f"dpotri failed with info={info}")
    return inv


def _factor_with_jitter(K: np.ndarray, spec: KernelSpec):
    """Cholesky of K, with a one-shot jitter rescue for tiny-noise kernels."""
    try:
        return _cholesky(K), 0.0
    except sla.LinAlgError:
        pass
    noise = spec.params.noise
    if noise > _JITTER_NOISE_CEILING:
        smallest = float(np.linalg.eigvalsh(K).min())
        raise NumericalError(
            f"Cholesky factorization failed (smallest eigenvalue ~ {smallest:.3e}) "
            f"with noise {noise:.3e}; jitter is not applied at this noise level"
        )
    jitter = _JITTER_SCALE * spec.params.outputscale ** 2
    Kj = K.copy()
    Kj[np.diag_indices_from(Kj)] += jitter
    try:
        L = _cholesky(Kj)
        logger.warning("added jitter %.3e to stabilize factorization", jitter)
        return L, jitter
    except sla.LinAlgError:
        smallest = float(np.linalg.eigvalsh(K).min())
        raise NumericalError(
            f"Cholesky factorization failed even with jitter {jitter:.3e} "
            f"(smallest eigenvalue ~ {smallest:.3e})"
        ) from None


def _check_targets(X, y):
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != X.shape[0]:
        raise InputError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise InputError("targets contain non-finite entries")
    return y


def _resolve_prior_mean(prior_mean, n):
    if prior_mean is None:
        return np.zeros(n), "zero"
    m = np.asarray(prior_mean, dtype=float).ravel()
    if m.shape[0] != n:
        raise InputError(f"prior mean has length {m.shape[0]}, expected {n}")
    return m, "external"


class MeanMode(Enum):
    ZERO = "zero"
    EXTERNAL = "external"


@dataclass
class GPModel:
    """Trained posterior state for exact GP prediction."""

    spec: KernelSpec
    X_train: np.ndarray
    y_train: np.ndarray
    mean_mode: MeanMode
    prior_mean_train: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0


@dataclass
class PosteriorPrediction:
    """Predictive mean and (noisy) variance per query point."""

    mean: np.ndarray
    variance: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


def fit_posterior(spec: KernelSpec, X, y, prior_mean=None) -> GPModel:
    """Condition the GP on (X, y), optionally around an external mean.

    Returns a model holding the Cholesky factor of the noisy Gram matrix
    and the weight vector alpha = K^{-1} (y - m(X)).
    """
    X = _check_matrix(X)
    y = _check_targets(X, y)
    m, mode = _resolve_prior_mean(prior_mean, X.shape[0])
    K = gram_matrix(spec, X, include_noise=True)
    L, jitter = _factor_with_jitter(K, spec)
    alpha = _chol_solve(L, y - m)
    return GPModel(
        spec=spec,
        X_train=X,
        y_train=y,
        mean_mode=MeanMode(mode),
        prior_mean_train=m,
        chol=L,
        alpha=alpha,
        jitter=jitter,
    )


def predict(model: GPModel, X_star, prior_mean_star=None) -> PosteriorPrediction:
    """Posterior predictive mean and variance at the query points.

    The variance is the full noisy predictive variance
    k(x*, x*) - K_*X K_XX^{-1} K_X*, with k(x*, x*) = sigma_f^2 + sigma_n^2.
    Values in [-1e-8, 0) are clamped to 0 (counted); anything more
    negative raises ``NumericalError``.
    """
    global negative_variance_clamps
    X_star = _check_matrix(X_star, "X_star")
    Ks = cross_matrix(model.spec, X_star, model.X_train)
    if model.mean_mode is MeanMode.EXTERNAL:
        if prior_mean_star is None:
            raise InputError("model was fitted with an external mean; pass prior_mean_star")
        m_star = np.asarray(prior_mean_star, dtype=float).ravel()
        if m_star.shape[0] != X_star.shape[0]:
            raise InputError("prior_mean_star length does not match X_star")
    else:
        m_star = np.zeros(X_star.shape[0])
    mean = m_star + Ks @ model.alpha
    v = sla.solve_triangular(model.chol, Ks.T, lower=True, check_finite=False)
    p = model.spec.params
    prior_var = p.outputscale ** 2 + p.noise ** 2
    variance = prior_var - np.einsum("ij,ij->j", v, v)
    bad = variance < -VAR_TOL
    if np.any(bad):
        raise NumericalError(
            f"predictive variance fell to {variance.min():.3e}, below the -{VAR_TOL:g} tolerance"
        )
    neg = variance < 0.0
    if np.any(neg):
        negative_variance_clamps += int(neg.sum())
        logger.warning("clamped %d tiny negative predictive variances", int(neg.sum()))
        variance = np.where(neg, 0.0, variance)
    return PosteriorPrediction(mean=mean, variance=variance)


def _nll_from_factor(L, r, n):
    alpha = _chol_solve(L, r)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return 0.5 / n * (r @ alpha + logdet + n * LOG_2PI), alpha


def nll(spec: KernelSpec, X, y, prior_mean=None) -> float:
    """Scaled negative log marginal likelihood (see module docstring)."""
    X = _check_matrix(X)
    y = _check_targets(X, y)
    m, _ = _resolve_prior_mean(prior_mean, X.shape[0])
    K = gram_matrix(spec, X, include_noise=True)
    L, _ = _factor_with_jitter(K, spec)
    value, _ = _nll_from_factor(L, y - m, X.shape[0])
    return float(value)


def nll_gradient(spec: KernelSpec, X, y, prior_mean=None) -> np.ndarray:
    """Gradient of ``nll`` w.r.t. the three raw hyperparameters."""
    value, grad = nll_and_gradient(spec, X, y, prior_mean)
    return grad


def nll_and_gradient(spec: KernelSpec, X, y, prior_mean=None):
    """NLL and its raw-parameter gradient from one factorization.

    The gradient is (1/2n) * [ tr(K^{-1} dK) - a^T dK a ] per parameter,
    a = K^{-1} r, evaluated without materializing the dK matrices: the
    base correlation matrix C (unit diagonal) and its lengthscale
    derivative dC (zero diagonal) give every dK by scalar factors, and
    K^{-1} enters as its lower triangle only.
    """
    from . import _backend

    X = _check_matrix(X)
    y = _check_targets(X, y)
    n = X.shape[0]
    m, _ = _resolve_prior_mean(prior_mean, n)
    r = y - m
    p = spec.params
    sf, sn, l = p.outputscale, p.noise, p.lengthscale
    C, dC = _backend.base_and_dl(spec.family.code, l, X)
    K = (sf ** 2) * C
    K[np.diag_indices_from(K)] += sn ** 2
    L, _ = _factor_with_jitter(K, spec)
    value, alpha = _nll_from_factor(L, r, n)
    inv_tri = _chol_inverse_tri(L)
    tr_Kinv = float(np.trace(inv_tri))
    # C has a unit diagonal and dC a zero diagonal, so the symmetric
    # contractions reduce to doubled lower-triangle sums
    sum_KinvC = 2.0 * float(np.einsum("ij,ij->", inv_tri, C)) - tr_Kinv
    sum_KinvdC = 2.0 * float(np.einsum("ij,ij->", inv_tri, dC))
    Ca = C @ alpha
    dCa = dC @ alpha
    sig = _sigmoid_triplet(p)
    grad = np.empty(3)
    grad[0] = sf ** 2 * sig[0] * (sum_KinvdC - alpha @ dCa)
    grad[1] = 2.0 * sf * sig[1] * (sum_KinvC - alpha @ Ca)
    grad[2] = 2.0 * sn * sig[2] * (tr_Kinv - alpha @ alpha)
    grad *= 0.5 / n
    return float(value), grad


def _sigmoid_triplet(p):
    raw = np.array([p.raw_lengthscale, p.raw_outputscale, p.raw_noise])
    return 0.5 * (1.0 + np.tanh(0.5 * raw))


def joint_test_nll(model: GPModel, X_star, y_star, prior_mean_star=None) -> float:
    """Joint NLL of the test targets under the full predictive covariance.

    This is the alternative reading of "test NLL"; the default metric is
    the per-point form in :func:`twostage_gp.metrics.test_nll`.
    """
    X_star = _check_matrix(X_star, "X_star")
    y_star = _check_targets(X_star, y_star)
    pred = predict(model, X_star, prior_mean_star=prior_mean_star)
    Ks = cross_matrix(model.spec, X_star, model.X_train)
    v = sla.solve_triangular(model.chol, Ks.T, lower=True, check_finite=False)
    K_ss = gram_matrix(model.spec, X_star, include_noise=True)
    cov = K_ss - v.T @ v
    cov = 0.5 * (cov + cov.T)
    L, _ = _factor_with_jitter(cov, model.spec)
    value, _ = _nll_from_factor(L, y_star - pred.mean, X_star.shape[0])
    return float(value)


@dataclass
class KRRModel:
    """Kernel ridge regression in dual form; lambda plays the noise role."""

    spec: KernelSpec
    X_train: np.ndarray
    dual_weights: np.ndarray
    lam: float


def fit_krr(spec: KernelSpec, X, y, lam: float) -> KRRModel:
    """Solve (K + lambda I) w = y on the noiseless Gram matrix."""
    if lam <= 0 or not np.isfinite(lam):
        raise InputError(f"ridge parameter must be positive, got {lam}")
    X = _check_matrix(X)
    y = _check_targets(X, y)
    K = gram_matrix(spec, X, include_noise=False)
    K[np.diag_indices_from(K)] += lam
    try:
        L = _cholesky(K)
    except sla.LinAlgError:
        smallest = float(np.linalg.eigvalsh(K).min())
        raise NumericalError(
            f"KRR factorization failed (smallest eigenvalue ~ {smallest:.3e})"
        ) from None
    w = _chol_solve(L, y)
    stored = KernelSpec(
        spec.family,
        Hyperparameters.from_constrained(
            spec.params.lengthscale, spec.params.outputscale, np.sqrt(lam)
        ),
    )
    return KRRModel(spec=stored, X_train=X, dual_weights=w, lam=float(lam))


def krr_predict(model: KRRModel, X_star) -> np.ndarray:
    """Point prediction K_*X w."""
    return cross_matrix(model.spec, X_star, model.X_train) @ model.dual_weights


def default_krr_lengthscale(d: int) -> float:
    # sqrt(d) keeps exp(-||.||^2/l^2) at a moderate correlation for
    # standardized inputs, mirroring the common 1/d bandwidth default.
    return float(np.sqrt(d))


DEFAULT_KRR_LAMBDAS = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_KRR_FAMILIES = (KernelFamily.RBF, KernelFamily.MATERN12)


def krr_cross_validate(
    X,
    y,
    lambdas=DEFAULT_KRR_LAMBDAS,
    families=DEFAULT_KRR_FAMILIES,
    folds: int = 5,
    lengthscale=None,
):
    """Pick (family, lambda) by k-fold mean held-out squared error.

    The partition is a deterministic round-robin over row order. Ties are
    broken toward the smaller lambda, then toward the earlier family in
    the input list.

    Returns
    -------
    (KernelFamily, float)
    """
    X = _check_matrix(X)
    y = _check_targets(X, y)
    lambdas = list(lambdas)
    families = [
        f if isinstance(f, KernelFamily) else KernelFamily.from_name(f) for f in families
    ]
    if not lambdas or not families:
        raise InputError("lambda and family grids must be non-empty")
    if folds < 2:
        raise InputError(f"need at least 2 folds, got {folds}")
    n = X.shape[0]
    if n < folds:
        raise InputError(f"n={n} is smaller than folds={folds}")
    if lengthscale is None:
        lengthscale = default_krr_lengthscale(X.shape[1])
    fold_ids = np.arange(n) % folds

    best = None
    for lam in sorted(lambdas):
        for family in families:
            spec = KernelSpec(
                family, Hyperparameters.from_constrained(lengthscale, 1.0, 1.0)
            )
            errs = []
            for f in range(folds):
                test = fold_ids == f
                model = fit_krr(spec, X[~test], y[~test], lam)
                pred = krr_predict(model, X[test])
                errs.append(float(np.mean((pred - y[test]) ** 2)))
            score = float(np.mean(errs))
            if best is None or score < best[0]:
                best = (score, family, lam)
    return best[1], best[2]
