"""Evaluation metrics for probabilistic regression.

Covers point accuracy (RMSE), per-point Gaussian predictive NLL,
quantile-calibration error (QICE), certainty-stratified RMSE
(HC-RMSE / LC-RMSE), and central-interval coverage.

QICE bins each true target by the per-point Gaussian predictive
quantiles: with M bins, the m-th boundary for point i is
``mean_i + std_i * Phi^{-1}(m / M)``. Perfect calibration puts mass 1/M
in every bin; QICE is the mean absolute deviation from that, reported
as a percentage. Its maximum is 100 * 2(M-1)/M^2, attained when all
mass concentrates in a single bin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .exceptions import InputError, NumericalError


@dataclass
class MetricsConfig:
    """Defaults for benchmark reporting."""

    qice_bins: int = 10
    ua_quantile: float = 0.1
    coverage_level: float = 0.95

    def validate(self):
        if self.qice_bins < 2:
            raise InputError(f"qice_bins must be >= 2, got {self.qice_bins}")
        if not 0.0 < self.ua_quantile <= 0.5:
            raise InputError(f"ua_quantile must be in (0, 0.5], got {self.ua_quantile}")
        if not 0.0 < self.coverage_level < 1.0:
            raise InputError(f"coverage_level must be in (0, 1), got {self.coverage_level}")


@dataclass
class MetricsReport:
    """One evaluation row; aggregates hold mean/std across folds."""

    rmse: float
    nll: float
    qice_percent: float
    hc_rmse: float
    lc_rmse: float
    coverage: float
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        out = {
            "rmse": self.rmse,
            "nll": self.nll,
            "qice_percent": self.qice_percent,
            "hc_rmse": self.hc_rmse,
            "lc_rmse": self.lc_rmse,
            "coverage": self.coverage,
        }
        out.update(self.extra)
        return out


def _paired(pred, truth):
    pred = np.asarray(pred, dtype=float).ravel()
    truth = np.asarray(truth, dtype=float).ravel()
    if pred.shape != truth.shape:
        raise InputError(f"length mismatch: {pred.shape[0]} predictions vs {truth.shape[0]} truths")
    if pred.size < 1:
        raise InputError("metrics need at least one point")
    return pred, truth


def rmse(pred, truth) -> float:
    """Root mean squared error."""
    pred, truth = _paired(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def test_nll(pred_mean, pred_var, truth) -> float:
    """Mean per-point Gaussian predictive negative log-likelihood.

    0.5 * ((y - m)^2 / v + log v + log 2pi), averaged over points.
    """
    pred_mean, truth = _paired(pred_mean, truth)
    var = np.asarray(pred_var, dtype=float).ravel()
    if var.shape != pred_mean.shape:
        raise InputError("variance vector length does not match predictions")
    if np.any(var <= 0.0):
        raise NumericalError(f"non-positive predictive variance (min {var.min():.3e})")
    return float(
        np.mean(0.5 * ((truth - pred_mean) ** 2 / var + np.log(var) + np.log(2.0 * np.pi)))
    )


def qice(pred_mean, pred_std, truth, bins: int = 10) -> float:
    """Quantile interval coverage error, as a percentage.

    Boundary bins extend to -inf/+inf, so the bin frequencies always sum
    to 1. Lower is better; 0 means perfectly calibrated quantiles.
    """
    if bins < 2:
        raise InputError(f"bins must be >= 2, got {bins}")
    pred_mean, truth = _paired(pred_mean, truth)
    std = np.asarray(pred_std, dtype=float).ravel()
    if std.shape != pred_mean.shape:
        raise InputError("std vector length does not match predictions")
    if np.any(std <= 0.0):
        raise NumericalError("predictive standard deviations must be positive")
    # z-score each truth; bin boundaries become the fixed standard-normal
    # quantiles Phi^{-1}(m / M)
    z = (truth - pred_mean) / std
    edges = ndtri(np.arange(1, bins) / bins)
    # searchsorted(left) assigns z == edge to the lower bin, matching
    # half-open (lo, hi] intervals
    bin_of = np.searchsorted(edges, z, side="left")
    r = np.bincount(bin_of, minlength=bins) / z.size
    return float(100.0 * np.mean(np.abs(r - 1.0 / bins)))


def ua_rmse(pred_mean, pred_std, truth, q: float = 0.1):
    """RMSE over the most- and least-certain q-fraction of points.

    Returns
    -------
    (hc_rmse, lc_rmse) : tuple of float
        RMSE over the floor(q*n) points with the smallest predictive
        std, and over the floor(q*n) with the largest; ties break by
        index.
    """
    pred_mean, truth = _paired(pred_mean, truth)
    std = np.asarray(pred_std, dtype=float).ravel()
    if std.shape != pred_mean.shape:
        raise InputError("std vector length does not match predictions")
    k = int(np.floor(q * pred_mean.size))
    if k < 1:
        raise InputError(f"q={q} with n={pred_mean.size} selects no points")
    hc_idx = np.argsort(std, kind="stable")[:k]
    lc_idx = np.argsort(-std, kind="stable")[:k]
    return (
        rmse(pred_mean[hc_idx], truth[hc_idx]),
        rmse(pred_mean[lc_idx], truth[lc_idx]),
    )


def coverage(pred_mean, pred_std, truth, level: float = 0.95) -> float:
    """Fraction of truths inside the central predictive interval."""
    if not 0.0 < level < 1.0:
        raise InputError(f"level must be in (0, 1), got {level}")
    pred_mean, truth = _paired(pred_mean, truth)
    std = np.asarray(pred_std, dtype=float).ravel()
    if std.shape != pred_mean.shape:
        raise InputError("std vector length does not match predictions")
    zcrit = ndtri(0.5 * (1.0 + level))
    return float(np.mean(np.abs(truth - pred_mean) <= zcrit * std))


def compute_report(pred_mean, pred_var, truth, cfg: MetricsConfig = None, rmse_scale: float = 1.0) -> MetricsReport:
    """All metrics for one fold.

    ``rmse_scale`` de-standardizes the error metrics (RMSE, HC/LC-RMSE)
    back to original target units; NLL/QICE/coverage stay on the modeled
    scale.
    """
    cfg = cfg or MetricsConfig()
    cfg.validate()
    pred_mean = np.asarray(pred_mean, dtype=float).ravel()
    var = np.asarray(pred_var, dtype=float).ravel()
    std = np.sqrt(var)
    hc, lc = ua_rmse(pred_mean, std, truth, cfg.ua_quantile)
    return MetricsReport(
        rmse=rmse_scale * rmse(pred_mean, truth),
        nll=test_nll(pred_mean, var, truth),
        qice_percent=qice(pred_mean, std, truth, cfg.qice_bins),
        hc_rmse=rmse_scale * hc,
        lc_rmse=rmse_scale * lc,
        coverage=coverage(pred_mean, std, truth, cfg.coverage_level),
    )
