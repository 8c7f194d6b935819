"""End-to-end model compositions.

Two pipelines share the same recipe: a kernel ridge regression captures
the mean, the training targets are demeaned by its in-sample
predictions, and a zero-mean GP fitted to the residuals supplies the
predictive variance (and, optionally, a residual mean correction).

* The exact pipeline fits the stage-two GP on all training points, with
  subsample warm-start hyperparameter training.
* The scalable pipeline predicts every query from its ``w`` nearest
  training neighbors (local KRR mean, local GP variance), with
  hyperparameters trained on random subsamples; per-query cost is
  O(n d + w^3).

A baseline nearest-neighbor GP with variance calibration is included for
comparison, as is the Dirichlet-likelihood transform that turns
classification labels into per-class heteroscedastic regression targets.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .exceptions import InputError, NumericalError
from .gp import (
    DEFAULT_KRR_FAMILIES,
    DEFAULT_KRR_LAMBDAS,
    GPModel,
    KRRModel,
    PosteriorPrediction,
    default_krr_lengthscale,
    fit_krr,
    fit_posterior,
    krr_cross_validate,
    krr_predict,
    predict,
)
from .kernels import Hyperparameters, KernelFamily, KernelSpec, _check_matrix, gram_matrix, cross_matrix
from .sampling import random_subsample
from .selection import MisspecConfig, aks
from .training import TrainConfig, WarmStartConfig, train_gp, warm_start_train

logger = logging.getLogger(__name__)

_DEFAULT_VAR_DICTIONARY = ("rbf", "matern32", "matern12")


@dataclass
class TwoStageConfig:
    """Settings shared by the exact and scalable two-stage pipelines."""

    # stage 1: "cv" selects (family, lambda) by cross-validation;
    # "fixed" uses the kernel-search winner with lambda = 0.01 * n
    stage1_mode: str = "cv"
    krr_lambdas: tuple = DEFAULT_KRR_LAMBDAS
    krr_families: tuple = tuple(f.value for f in DEFAULT_KRR_FAMILIES)
    krr_folds: int = 5
    krr_lengthscale: Optional[float] = None
    mean_dictionary: Optional[tuple] = None  # fixed mode only; None -> mean_kernel
    mean_kernel: str = "rbf"

    # stage 2 kernel selection; set var_dictionary=None to pin var_kernel
    var_dictionary: Optional[tuple] = _DEFAULT_VAR_DICTIONARY
    var_kernel: str = "rbf"
    var_params: Optional[Hyperparameters] = None  # skip training if given

    misspec: MisspecConfig = field(default_factory=MisspecConfig)
    selection_trainer: TrainConfig = field(default_factory=lambda: TrainConfig(iterations=50))
    trainer: TrainConfig = field(default_factory=TrainConfig)
    warm_start: WarmStartConfig = field(default_factory=WarmStartConfig.twostage_preset)

    # exact pipeline adds the stage-two residual mean by default; the
    # scalable pipeline keeps the KRR mean alone
    add_residual_mean: Optional[bool] = None
    seed: int = 0

    def validate(self):
        if self.stage1_mode not in ("cv", "fixed"):
            raise InputError(f"stage1_mode must be 'cv' or 'fixed', got {self.stage1_mode!r}")
        self.misspec.validate()
        self.selection_trainer.validate()
        self.trainer.validate()
        self.warm_start.validate()


@dataclass
class TwoStageModel:
    """Exact two-stage model: KRR mean plus zero-mean GP on residuals."""

    mean_model: KRRModel
    var_model: GPModel
    add_residual_mean: bool
    provenance: dict = field(default_factory=dict)


def _select_stage1(X, y, cfg: TwoStageConfig):
    lengthscale = cfg.krr_lengthscale or default_krr_lengthscale(X.shape[1])
    if cfg.stage1_mode == "cv":
        family, lam = krr_cross_validate(
            X,
            y,
            lambdas=cfg.krr_lambdas,
            families=cfg.krr_families,
            folds=cfg.krr_folds,
            lengthscale=lengthscale,
        )
    else:
        if cfg.mean_dictionary:
            family, _ = aks(
                X, y, cfg.mean_dictionary, cfg.misspec, cfg.selection_trainer,
                master_seed=cfg.seed,
            )
        else:
            family = KernelFamily.from_name(cfg.mean_kernel)
        lam = 0.01 * X.shape[0]
    spec = KernelSpec(family, Hyperparameters.from_constrained(lengthscale, 1.0, 1.0))
    return spec, lam


def _select_var_family(X, y_demeaned, cfg: TwoStageConfig):
    if cfg.var_dictionary:
        family, reports = aks(
            X,
            y_demeaned,
            cfg.var_dictionary,
            cfg.misspec,
            cfg.selection_trainer,
            master_seed=cfg.seed + 1,
        )
        rates = {f.value: r.mean_pass_rate for f, r in reports.items()}
        return family, rates
    return KernelFamily.from_name(cfg.var_kernel), {}


def fit_two_stage_exact(X, y, cfg: TwoStageConfig = None) -> TwoStageModel:
    """Fit the exact two-stage model.

    Stage 1 selects a KRR (family, lambda) and predicts the mean; stage 2
    picks a kernel for the demeaned targets, trains its hyperparameters
    with a subsample warm start, and fits the zero-mean GP on all
    residuals.
    """
    cfg = cfg or TwoStageConfig()
    cfg.validate()
    X = _check_matrix(X)
    y = np.asarray(y, dtype=float).ravel()

    krr_spec, lam = _select_stage1(X, y, cfg)
    mean_model = fit_krr(krr_spec, X, y, lam)
    y_demeaned = y - krr_predict(mean_model, X)

    var_family, var_rates = _select_var_family(X, y_demeaned, cfg)
    if cfg.var_params is not None:
        var_spec = KernelSpec(var_family, cfg.var_params)
    else:
        ws = replace(cfg.warm_start, m_train=min(cfg.warm_start.m_train, X.shape[0]))
        var_spec, _ = warm_start_train(
            KernelSpec(var_family), X, y_demeaned, ws, cfg.trainer
        )
    var_model = fit_posterior(var_spec, X, y_demeaned)
    add_mean = True if cfg.add_residual_mean is None else cfg.add_residual_mean
    return TwoStageModel(
        mean_model=mean_model,
        var_model=var_model,
        add_residual_mean=add_mean,
        provenance={
            "stage1_family": mean_model.spec.family.value,
            "stage1_lambda": lam,
            "stage2_family": var_family.value,
            "stage2_pass_rates": var_rates,
            "stage2_params": var_model.spec.params.constrained_vector().tolist(),
        },
    )


def predict_two_stage(model: TwoStageModel, X_star) -> PosteriorPrediction:
    """Combine the stage-one mean with the stage-two GP prediction."""
    base = krr_predict(model.mean_model, X_star)
    resid = predict(model.var_model, X_star)
    mean = base + resid.mean if model.add_residual_mean else base
    return PosteriorPrediction(mean=mean, variance=resid.variance)


# ---------------------------------------------------------------------------
# scalable (nearest-neighbor) pipeline


@dataclass
class ScalableConfig:
    """Neighborhood and subsample sizes for the scalable pipeline."""

    w: int = 50
    m_train: int = 400
    m_cal: int = 500  # baseline GPNN calibration only

    def validate(self, n_train=None):
        if self.w < 1:
            raise InputError(f"w must be >= 1, got {self.w}")
        if n_train is not None and self.w > n_train:
            raise InputError(f"w={self.w} exceeds n_train={n_train}")
        if self.m_train < 2:
            raise InputError(f"m_train must be >= 2, got {self.m_train}")


def nearest_neighbors(X_train, Q, w: int, exclude_rows=None, chunk: int = 512):
    """Indices of the w nearest training rows per query (unordered).

    ``exclude_rows[i]`` optionally names one training row the i-th query
    must not use (self-exclusion for in-sample calibration).
    """
    X_train = np.asarray(X_train, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = X_train.shape[0]
    if w > n:
        raise InputError(f"w={w} exceeds n={n}")
    if exclude_rows is not None:
        exclude_rows = np.asarray(exclude_rows, dtype=int)
        if exclude_rows.shape[0] != Q.shape[0]:
            raise InputError("exclude_rows must have one entry per query")
        if w >= n:
            raise InputError("cannot exclude a row when w covers all training points")
    xn = np.einsum("ij,ij->i", X_train, X_train)
    out = np.empty((Q.shape[0], w), dtype=np.int64)
    for lo in range(0, Q.shape[0], chunk):
        hi = min(lo + chunk, Q.shape[0])
        qc = Q[lo:hi]
        D = xn[None, :] - 2.0 * (qc @ X_train.T)
        if exclude_rows is not None:
            D[np.arange(hi - lo), exclude_rows[lo:hi]] = np.inf
        if w == n:
            out[lo:hi] = np.argsort(D, axis=1)[:, :w]
        else:
            out[lo:hi] = np.argpartition(D, w - 1, axis=1)[:, :w]
    return out


def _local_krr_means(spec, lam, X_train, y_train, Q, neighbors):
    preds = np.empty(Q.shape[0])
    for i in range(Q.shape[0]):
        idx = neighbors[i]
        K = gram_matrix(spec, X_train[idx], include_noise=False)
        K[np.diag_indices_from(K)] += lam
        cf = sla.cho_factor(K, lower=True, check_finite=False)
        wts = sla.cho_solve(cf, y_train[idx], check_finite=False)
        k = cross_matrix(spec, Q[i : i + 1], X_train[idx])[0]
        preds[i] = k @ wts
    return preds


def _local_gp_predict(spec, X_train, y_train, Q, neighbors):
    p = spec.params
    prior_var = p.outputscale ** 2 + p.noise ** 2
    means = np.empty(Q.shape[0])
    variances = np.empty(Q.shape[0])
    for i in range(Q.shape[0]):
        idx = neighbors[i]
        K = gram_matrix(spec, X_train[idx], include_noise=True)
        cf = sla.cho_factor(K, lower=True, check_finite=False)
        k = cross_matrix(spec, Q[i : i + 1], X_train[idx])[0]
        sol = sla.cho_solve(cf, np.column_stack([y_train[idx], k]), check_finite=False)
        means[i] = k @ sol[:, 0]
        variances[i] = prior_var - k @ sol[:, 1]
    bad = variances < -1e-8
    if np.any(bad):
        raise NumericalError(
            f"local predictive variance fell to {variances.min():.3e}"
        )
    np.maximum(variances, 0.0, out=variances)
    return means, variances


@dataclass
class ScalableTwoStageModel:
    """Fitted state for nearest-neighbor two-stage prediction."""

    X_train: np.ndarray
    y_train: np.ndarray
    y_demeaned: np.ndarray
    krr_spec: KernelSpec
    krr_lambda: float
    var_spec: KernelSpec
    w: int
    add_residual_mean: bool
    provenance: dict = field(default_factory=dict)


def fit_two_stage_scalable(
    X, y, sc: ScalableConfig = None, cfg: TwoStageConfig = None
) -> ScalableTwoStageModel:
    """Fit the scalable two-stage model.

    Stage-one (family, lambda) comes from cross-validation on a random
    subsample of size ``sc.m_train``; the training targets are demeaned
    by local KRR over each point's ``w`` nearest neighbors (the point
    itself included). Stage-two kernel hyperparameters are trained on a
    random subsample of the demeaned data; queries are answered from
    their local neighborhoods only.
    """
    sc = sc or ScalableConfig()
    cfg = cfg or TwoStageConfig()
    cfg.validate()
    X = _check_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    sc.validate(n_train=n)
    rng_seed = cfg.seed

    m = min(sc.m_train, n)
    sub = random_subsample(n, m, rng_seed)
    lengthscale = cfg.krr_lengthscale or default_krr_lengthscale(X.shape[1])
    if cfg.stage1_mode == "cv":
        family, lam = krr_cross_validate(
            X[sub],
            y[sub],
            lambdas=cfg.krr_lambdas,
            families=cfg.krr_families,
            folds=cfg.krr_folds,
            lengthscale=lengthscale,
        )
    else:
        if cfg.mean_dictionary:
            family, _ = aks(
                X[sub], y[sub], cfg.mean_dictionary, cfg.misspec,
                cfg.selection_trainer, master_seed=rng_seed,
            )
        else:
            family = KernelFamily.from_name(cfg.mean_kernel)
        lam = 0.01 * m
    krr_spec = KernelSpec(family, Hyperparameters.from_constrained(lengthscale, 1.0, 1.0))

    train_nn = nearest_neighbors(X, X, min(sc.w, n))
    y_demeaned = y - _local_krr_means(krr_spec, lam, X, y, X, train_nn)

    sub2 = random_subsample(n, m, rng_seed + 1)
    if cfg.var_dictionary:
        var_family, _ = aks(
            X[sub2], y_demeaned[sub2], cfg.var_dictionary, cfg.misspec,
            cfg.selection_trainer, master_seed=rng_seed + 1,
        )
    else:
        var_family = KernelFamily.from_name(cfg.var_kernel)
    if cfg.var_params is not None:
        var_spec = KernelSpec(var_family, cfg.var_params)
    else:
        var_spec, _ = train_gp(
            KernelSpec(var_family), X[sub2], y_demeaned[sub2], cfg.trainer
        )

    add_mean = False if cfg.add_residual_mean is None else cfg.add_residual_mean
    return ScalableTwoStageModel(
        X_train=X,
        y_train=y,
        y_demeaned=y_demeaned,
        krr_spec=krr_spec,
        krr_lambda=lam,
        var_spec=var_spec,
        w=min(sc.w, n),
        add_residual_mean=add_mean,
        provenance={
            "stage1_family": krr_spec.family.value,
            "stage1_lambda": lam,
            "stage2_family": var_spec.family.value,
            "stage2_params": var_spec.params.constrained_vector().tolist(),
        },
    )


def predict_two_stage_scalable(model: ScalableTwoStageModel, X_star) -> PosteriorPrediction:
    """Per-query prediction from the w nearest training neighbors."""
    X_star = _check_matrix(X_star, "X_star")
    nn = nearest_neighbors(model.X_train, X_star, model.w)
    mean = _local_krr_means(
        model.krr_spec, model.krr_lambda, model.X_train, model.y_train, X_star, nn
    )
    resid_mean, variance = _local_gp_predict(
        model.var_spec, model.X_train, model.y_demeaned, X_star, nn
    )
    if model.add_residual_mean:
        mean = mean + resid_mean
    return PosteriorPrediction(mean=mean, variance=variance)


# ---------------------------------------------------------------------------
# baseline nearest-neighbor GP with variance calibration


@dataclass
class GPNNModel:
    """Baseline: one GP per query over its nearest neighbors."""

    X_train: np.ndarray
    y_train: np.ndarray
    spec: KernelSpec
    w: int
    calibration: float = 1.0
    provenance: dict = field(default_factory=dict)


def predict_gpnn(model: GPNNModel, X_star) -> PosteriorPrediction:
    X_star = _check_matrix(X_star, "X_star")
    nn = nearest_neighbors(model.X_train, X_star, model.w)
    mean, variance = _local_gp_predict(model.spec, model.X_train, model.y_train, X_star, nn)
    return PosteriorPrediction(mean=mean, variance=variance)


def miscalibration(pred: PosteriorPrediction, truth) -> float:
    """Mean squared z-score of the truths under the predictions."""
    truth = np.asarray(truth, dtype=float).ravel()
    if np.any(pred.variance <= 0.0):
        raise NumericalError("calibration requires strictly positive variances")
    return float(np.mean((truth - pred.mean) ** 2 / pred.variance))


def gpnn_calibrate(model: GPNNModel, X_cal, y_cal) -> Hyperparameters:
    """Rescale sigma_f^2 and sigma_n^2 so the calibration z-scores average 1.

    The predictive variance is homogeneous in (sigma_f^2, sigma_n^2), so
    multiplying both by the miscalibration factor makes the recomputed
    factor exactly 1 on the same calibration set.
    """
    pred = predict_gpnn(model, X_cal)
    cal = miscalibration(pred, y_cal)
    p = model.spec.params
    scale = float(np.sqrt(cal))
    return Hyperparameters.from_constrained(
        p.lengthscale, p.outputscale * scale, p.noise * scale
    )


def fit_gpnn(
    X, y, sc: ScalableConfig = None, trainer: TrainConfig = None,
    kernel: str = "rbf", calibrate: bool = True, seed: int = 0,
) -> GPNNModel:
    """Baseline GPNN: subsample-trained hyperparameters, then calibration.

    Calibration predicts a random subsample of training points from their
    neighbors (excluding themselves) and rescales the variances.
    """
    sc = sc or ScalableConfig()
    trainer = trainer or TrainConfig(iterations=200)
    X = _check_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    sc.validate(n_train=n)
    sub = random_subsample(n, min(sc.m_train, n), seed)
    spec, _ = train_gp(KernelSpec(KernelFamily.from_name(kernel)), X[sub], y[sub], trainer)
    model = GPNNModel(X_train=X, y_train=y, spec=spec, w=min(sc.w, n))
    if calibrate and n > sc.w:
        cal_idx = random_subsample(n, min(sc.m_cal, n), seed + 1)
        # each calibration point is predicted without itself in the pool
        nn = nearest_neighbors(X, X[cal_idx], model.w, exclude_rows=cal_idx)
        mean, var = _local_gp_predict(spec, X, y, X[cal_idx], nn)
        cal = miscalibration(PosteriorPrediction(mean, var), y[cal_idx])
        p = spec.params
        scale = float(np.sqrt(cal))
        model.spec = KernelSpec(
            spec.family,
            Hyperparameters.from_constrained(p.lengthscale, p.outputscale * scale, p.noise * scale),
        )
        model.calibration = cal
        model.provenance["calibration"] = cal
    return model


# ---------------------------------------------------------------------------
# Dirichlet-likelihood classification transform


def dirichlet_transform(class_index: int, num_classes: int, alpha_epsilon: float = 0.01):
    """Per-class regression targets and noise for one labeled instance.

    The label's Dirichlet concentration is ``alpha_epsilon + 1`` for the
    true class and ``alpha_epsilon`` elsewhere; each class then gets a
    lognormal-matched Gaussian target ``log(alpha) - var/2`` with
    variance ``log(1/alpha + 1)``.

    Returns
    -------
    (targets, noise_vars) : tuple of ndarray, each of length num_classes
    """
    if num_classes < 2:
        raise InputError(f"num_classes must be >= 2, got {num_classes}")
    if alpha_epsilon <= 0:
        raise InputError(f"alpha_epsilon must be positive, got {alpha_epsilon}")
    if not 0 <= class_index < num_classes:
        raise InputError(f"class_index {class_index} out of range for {num_classes} classes")
    alpha = np.full(num_classes, alpha_epsilon, dtype=float)
    alpha[class_index] += 1.0
    noise_vars = np.log(1.0 / alpha + 1.0)
    targets = np.log(alpha) - 0.5 * noise_vars
    return targets, noise_vars


class DirichletGPClassifier:
    """One zero-mean GP per class on Dirichlet-transformed targets.

    The per-class observation noise is heteroscedastic (it depends on
    each point's label), so the Gram matrix carries a per-point noise
    diagonal instead of the scalar noise term. Prediction samples the
    latent posteriors and averages the softmax across samples.
    """

    def __init__(self, spec: KernelSpec = None, alpha_epsilon: float = 0.01):
        self.spec = spec or KernelSpec()
        self.alpha_epsilon = alpha_epsilon
        self.num_classes = None
        self._X = None
        self._chols = []
        self._alphas = []

    def fit(self, X, labels, num_classes: int = None):
        X = _check_matrix(X)
        labels = np.asarray(labels, dtype=int).ravel()
        if labels.shape[0] != X.shape[0]:
            raise InputError("labels length does not match X")
        self.num_classes = int(num_classes or labels.max() + 1)
        targets = np.empty((X.shape[0], self.num_classes))
        noises = np.empty((X.shape[0], self.num_classes))
        for i, lab in enumerate(labels):
            targets[i], noises[i] = dirichlet_transform(
                int(lab), self.num_classes, self.alpha_epsilon
            )
        self._X = X
        self._chols = []
        self._alphas = []
        base = gram_matrix(self.spec, X, include_noise=False)
        for c in range(self.num_classes):
            K = base.copy()
            K[np.diag_indices_from(K)] += noises[:, c]
            L = sla.cholesky(K, lower=True, check_finite=False)
            self._chols.append(L)
            self._alphas.append(sla.cho_solve((L, True), targets[:, c], check_finite=False))
        return self

    def predict_proba(self, X_star, n_samples: int = 256, seed: int = 0) -> np.ndarray:
        if self._X is None:
            raise InputError("classifier is not fitted")
        X_star = _check_matrix(X_star, "X_star")
        Ks = cross_matrix(self.spec, X_star, self._X)
        sf2 = self.spec.params.outputscale ** 2
        means = np.empty((X_star.shape[0], self.num_classes))
        stds = np.empty_like(means)
        for c in range(self.num_classes):
            means[:, c] = Ks @ self._alphas[c]
            v = sla.solve_triangular(self._chols[c], Ks.T, lower=True, check_finite=False)
            latent = sf2 - np.einsum("ij,ij->j", v, v)
            stds[:, c] = np.sqrt(np.maximum(latent, 0.0))
        rng = np.random.default_rng(seed)
        draws = means[None, :, :] + stds[None, :, :] * rng.standard_normal(
            (n_samples, *means.shape)
        )
        draws -= draws.max(axis=2, keepdims=True)
        e = np.exp(draws)
        probs = e / e.sum(axis=2, keepdims=True)
        return probs.mean(axis=0)
