"""Kernel misspecification testing and automatic kernel search.

The misspecification check runs repeated rounds: subsample a
quasi-uniform subset by farthest-point sampling, split it into train and
test, train a zero-mean GP, and compare each test point's absolute
prediction error against the model's own estimate of the irreducible
(noise-driven) error at that point. For a well-specified kernel the
ratio stays near 1; the test counts how often it stays below a fixed
threshold (1.1) and accepts the kernel when that frequency is high
enough.

Automatic kernel search (AKS) runs the check for every candidate family
on a shared per-round seed schedule and returns the family with the
highest mean pass rate, ties going to the earlier dictionary entry.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .exceptions import InputError, ProcedureError, TwoStageGPError
from .gp import GPModel, blas_scope, fit_posterior, predict
from .kernels import KernelFamily, KernelSpec, _check_matrix, cross_matrix
from .sampling import fps
from .training import TrainConfig, train_gp

logger = logging.getLogger(__name__)

# Denominators below this magnitude mean the model interpolates the point;
# the numerator is then ~0 as well and the point counts as passing.
_DENOM_FLOOR = 1e-12


@dataclass
class MisspecConfig:
    """Settings for the misspecification check."""

    rounds: int = 100
    subsample_size: int = 500
    split_fraction: float = 0.8
    ratio_threshold: float = 1.1
    delta: float = 0.05
    desired_threshold: float = 0.95  # recorded only; 1 - delta decides

    def validate(self):
        if self.rounds < 1:
            raise InputError(f"rounds must be >= 1, got {self.rounds}")
        if self.ratio_threshold <= 1.0:
            raise InputError(f"ratio_threshold must exceed 1, got {self.ratio_threshold}")
        if not 0.0 < self.delta < 1.0:
            raise InputError(f"delta must be in (0, 1), got {self.delta}")
        if not 0.0 < self.split_fraction < 1.0:
            raise InputError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if self.subsample_size < 2:
            raise InputError(f"subsample_size must be >= 2, got {self.subsample_size}")


@dataclass
class MisspecReport:
    """Per-round pass rates and the accept/reject verdict."""

    family: KernelFamily
    round_pass_rates: np.ndarray
    mean_pass_rate: float
    verdict: str  # "accept" or "reject"
    delta: float
    skipped_rounds: int = 0

    @property
    def accepted(self) -> bool:
        return self.verdict == "accept"


def error_ratios(model: GPModel, X_test, y_test) -> np.ndarray:
    """Prediction-error / irreducible-error ratio per test point.

    The numerator is |m_hat(x*) - y*|. The denominator propagates the
    model's training residuals through the smoother and subtracts the
    test residual, which stands in for the unobservable noise at x*.
    The training residuals come out in closed form: with K alpha = r,
    y - m_hat(X) = (sigma_n^2 + jitter) * alpha.
    """
    X_test = _check_matrix(X_test, "X_test")
    y_test = np.asarray(y_test, dtype=float).ravel()
    pred = predict(model, X_test)
    eps_train = (model.spec.params.noise ** 2 + model.jitter) * model.alpha
    smoothed = _chol_cross_apply(model, X_test, eps_train)
    eps_test = y_test - pred.mean
    numer = np.abs(pred.mean - y_test)
    denom = np.abs(smoothed - eps_test)
    ratios = np.empty_like(numer)
    tiny = denom < _DENOM_FLOOR
    ratios[tiny] = 0.0
    ratios[~tiny] = numer[~tiny] / denom[~tiny]
    return ratios


def _chol_cross_apply(model: GPModel, X_test, vec):
    Ks = cross_matrix(model.spec, X_test, model.X_train)
    return Ks @ sla.cho_solve((model.chol, True), vec, check_finite=False)


def verdict_for(mean_pass_rate: float, delta: float) -> str:
    return "reject" if mean_pass_rate < 1.0 - delta else "accept"


def misspec_check(
    X,
    y,
    family: KernelFamily,
    cfg: MisspecConfig = None,
    trainer: TrainConfig = None,
    master_seed: int = 0,
    _fps_indices=None,
) -> MisspecReport:
    """Hypothesis test for "this kernel family is well specified".

    Each round splits the FPS subsample into train/test with a round
    seed derived from ``master_seed``, trains a zero-mean GP, and
    records the fraction of test points whose error ratio stays below
    the threshold. Rounds whose training fails are skipped and logged;
    more than half skipped aborts the procedure.
    """
    cfg = cfg or MisspecConfig()
    cfg.validate()
    trainer = trainer or TrainConfig()
    X = _check_matrix(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if n < 10:
        raise InputError(f"misspec_check needs n >= 10, got {n}")
    if isinstance(family, str):
        family = KernelFamily.from_name(family)
    if _fps_indices is None:
        _fps_indices = fps(X, min(cfg.subsample_size, n)).indices
    sub_X = X[_fps_indices]
    sub_y = y[_fps_indices]
    m = sub_X.shape[0]
    n_train = max(2, int(round(cfg.split_fraction * m)))
    if n_train >= m:
        n_train = m - 1

    rates = []
    skipped = 0
    with blas_scope(m):
        for r in range(cfg.rounds):
            rng = np.random.default_rng(master_seed + r)
            perm = rng.permutation(m)
            tr, te = perm[:n_train], perm[n_train:]
            try:
                spec0 = KernelSpec(family=family)
                spec, _ = train_gp(spec0, sub_X[tr], sub_y[tr], trainer)
                model = fit_posterior(spec, sub_X[tr], sub_y[tr])
                ratios = error_ratios(model, sub_X[te], sub_y[te])
            except TwoStageGPError as exc:
                skipped += 1
                logger.warning("misspec round %d skipped for %s: %s", r, family.value, exc)
                continue
            rates.append(float(np.mean(ratios <= cfg.ratio_threshold)))
    if skipped > cfg.rounds // 2:
        raise ProcedureError(
            f"misspecification check for {family.value} lost {skipped}/{cfg.rounds} rounds"
        )
    rates = np.asarray(rates)
    mean_rate = float(rates.mean())
    return MisspecReport(
        family=family,
        round_pass_rates=rates,
        mean_pass_rate=mean_rate,
        verdict=verdict_for(mean_rate, cfg.delta),
        delta=cfg.delta,
        skipped_rounds=skipped,
    )


def aks(
    X,
    y,
    dictionary=(KernelFamily.RBF, KernelFamily.MATERN32, KernelFamily.MATERN12),
    cfg: MisspecConfig = None,
    trainer: TrainConfig = None,
    master_seed: int = 0,
):
    """Automatic kernel search over an ordered candidate dictionary.

    All families see the same FPS subsample and the same per-round
    splits, so their pass rates are paired. Returns the winning family
    and a dict of per-family reports; ties break toward the earlier
    dictionary entry.
    """
    cfg = cfg or MisspecConfig()
    cfg.validate()
    families = [
        f if isinstance(f, KernelFamily) else KernelFamily.from_name(f) for f in dictionary
    ]
    if not families:
        raise InputError("kernel dictionary must be non-empty")
    X = _check_matrix(X)
    fps_idx = fps(X, min(cfg.subsample_size, X.shape[0])).indices
    reports = {}
    failures = 0
    for family in families:
        try:
            reports[family] = misspec_check(
                X, y, family, cfg, trainer, master_seed=master_seed, _fps_indices=fps_idx
            )
        except ProcedureError as exc:
            failures += 1
            logger.warning("AKS dropped %s: %s", family.value, exc)
    if failures == len(families):
        raise ProcedureError("every candidate kernel failed the misspecification procedure")
    best = max(
        (f for f in families if f in reports),
        key=lambda f: reports[f].mean_pass_rate,
    )
    # max() keeps the first maximal element, which is the earlier
    # dictionary entry by construction of `families`.
    return best, reports
