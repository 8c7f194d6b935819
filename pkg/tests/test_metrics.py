import numpy as np
import pytest
from scipy.special import ndtri

from twostage_gp.exceptions import InputError, NumericalError
from twostage_gp.metrics import MetricsConfig, compute_report, coverage, qice, rmse, ua_rmse
from twostage_gp.metrics import test_nll as predictive_nll

LOG2PI = np.log(2.0 * np.pi)


def test_rmse_zero_for_exact():
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0


def test_rmse_constant_offset():
    t = np.arange(5.0)
    assert rmse(t + 1.0, t) == pytest.approx(1.0)


def test_rmse_hand_value():
    assert rmse([0.0, 0.0], [3.0, 4.0]) == pytest.approx(np.sqrt(12.5))


def test_rmse_length_mismatch():
    with pytest.raises(InputError):
        rmse([1.0], [1.0, 2.0])


def test_nll_zero_residual_unit_variance():
    y = np.arange(4.0)
    assert predictive_nll(y, np.ones(4), y) == pytest.approx(0.5 * LOG2PI)


def test_nll_normalization_zero_crossing():
    y = np.arange(4.0)
    assert predictive_nll(y, np.full(4, 1.0 / (2.0 * np.pi)), y) == pytest.approx(0.0, abs=1e-12)


def test_nll_scalar_oracle():
    assert predictive_nll([0.0], [1.0], [1.0]) == pytest.approx(0.5 * (1.0 + LOG2PI))


def test_nll_rejects_nonpositive_variance():
    with pytest.raises(NumericalError):
        predictive_nll([0.0], [0.0], [1.0])


def test_qice_perfectly_calibrated_construction():
    M, per_bin = 10, 50
    rng = np.random.default_rng(0)
    mean = rng.normal(size=M * per_bin)
    std = rng.uniform(0.5, 2.0, size=M * per_bin)
    mids = ndtri((np.arange(M) + 0.5) / M)
    z = np.tile(mids, per_bin)
    truth = mean + std * z
    assert qice(mean, std, truth, bins=M) == pytest.approx(0.0, abs=1e-12)


def test_qice_mass_below_first_quantile():
    # all truths below every first quantile: r_1 = 1, others 0
    n = 40
    mean = np.zeros(n)
    std = np.ones(n)
    truth = np.full(n, -100.0)
    assert qice(mean, std, truth, bins=5) == pytest.approx(32.0)


def test_qice_upper_bound_fuzz():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(1, 50))
        mean = rng.normal(size=n)
        std = rng.uniform(0.1, 3.0, size=n)
        truth = rng.normal(scale=rng.uniform(0.1, 50.0), size=n)
        assert qice(mean, std, truth, bins=10) <= 18.0 + 1e-12


def test_qice_permutation_invariance(rng):
    n = 30
    mean = rng.normal(size=n)
    std = rng.uniform(0.5, 2.0, size=n)
    truth = rng.normal(size=n)
    base = qice(mean, std, truth, bins=7)
    perm = rng.permutation(n)
    assert qice(mean[perm], std[perm], truth[perm], bins=7) == pytest.approx(base)


def test_qice_rejects_bad_bins():
    with pytest.raises(InputError):
        qice([0.0], [1.0], [0.0], bins=1)


def test_ua_rmse_constant_std_perfect_predictions():
    y = np.arange(10.0)
    hc, lc = ua_rmse(y, np.ones(10), y, q=0.2)
    assert hc == 0.0 and lc == 0.0


def test_ua_rmse_rank_correlated():
    rng = np.random.default_rng(2)
    n = 100
    err = np.abs(rng.normal(size=n))
    std = err + 0.01  # std perfectly tracks |error|
    truth = np.zeros(n)
    hc, lc = ua_rmse(err, std, truth, q=0.1)
    assert hc <= lc


def test_ua_rmse_singleton_subsets():
    mean = np.zeros(10)
    std = np.arange(1.0, 11.0)
    truth = np.zeros(10)
    truth[0] = -0.5  # smallest std -> error 0.5
    truth[9] = 2.0  # largest std -> error 2.0
    hc, lc = ua_rmse(mean, std, truth, q=0.1)
    assert hc == pytest.approx(0.5)
    assert lc == pytest.approx(2.0)


def test_ua_rmse_disjoint_subsets(rng):
    n = 40
    std = rng.permutation(np.linspace(0.1, 2.0, n))
    order = np.argsort(std)
    k = 4
    hc_set = set(order[:k].tolist())
    lc_set = set(order[-k:].tolist())
    assert not hc_set & lc_set


def test_ua_rmse_rejects_empty_selection():
    with pytest.raises(InputError):
        ua_rmse([0.0], [1.0], [0.0], q=0.1)


def test_coverage_exact_predictions():
    y = np.arange(5.0)
    assert coverage(y, np.ones(5), y, level=0.5) == 1.0


def test_coverage_zero_std_nonzero_residuals():
    y = np.arange(5.0)
    assert coverage(y + 1.0, np.zeros(5), y, level=0.95) == 0.0


def test_coverage_standard_normal_residuals():
    rng = np.random.default_rng(3)
    n = 10000
    mean = np.zeros(n)
    truth = rng.standard_normal(n)
    c = coverage(mean, np.ones(n), truth, level=0.95)
    assert 0.94 <= c <= 0.96


def test_coverage_monotone_in_level(rng):
    n = 500
    mean = np.zeros(n)
    std = rng.uniform(0.5, 1.5, n)
    truth = rng.normal(size=n)
    levels = [0.5, 0.8, 0.9, 0.95, 0.99]
    vals = [coverage(mean, std, truth, level=v) for v in levels]
    assert np.all(np.diff(vals) >= 0.0)


def test_compute_report_scales_rmse(rng):
    n = 50
    mean = rng.normal(size=n)
    var = rng.uniform(0.5, 1.5, n)
    truth = rng.normal(size=n)
    r1 = compute_report(mean, var, truth, MetricsConfig())
    r10 = compute_report(mean, var, truth, MetricsConfig(), rmse_scale=10.0)
    assert r10.rmse == pytest.approx(10.0 * r1.rmse)
    assert r10.nll == pytest.approx(r1.nll)
    assert r10.qice_percent == pytest.approx(r1.qice_percent)
