import numpy as np
import pytest

from twostage_gp.exceptions import InputError, TrainingError
from twostage_gp.gp import factorization_counts, nll, reset_factorization_counts
from twostage_gp.kernels import KernelFamily, KernelSpec
from twostage_gp.training import (
    TrainConfig,
    WARM_START_PRESETS,
    WarmStartConfig,
    lr_schedule,
    nll_contour,
    train_gp,
    warm_start_train,
)

from conftest import sample_gp, spec_of


def make_data(seed, n=60, span=6.0):
    spec = spec_of(KernelFamily.RBF, 1.0, 1.0, 0.3)
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, span, n)[:, None]
    return X, sample_gp(spec, X, seed)


def test_zero_iterations_rejected():
    X, y = make_data(0)
    with pytest.raises(InputError):
        train_gp(KernelSpec(KernelFamily.RBF), X, y, TrainConfig(iterations=0))


def test_zero_learning_rate_is_noop():
    X, y = make_data(0)
    init = KernelSpec(KernelFamily.RBF)
    spec, trace = train_gp(init, X, y, TrainConfig(iterations=1, learning_rate=0.0))
    assert np.array_equal(spec.params.raw_vector(), init.params.raw_vector())
    assert len(trace) == 1


def test_training_reduces_nll():
    X, y = make_data(1, n=120)
    init = KernelSpec(KernelFamily.RBF)
    spec, trace = train_gp(init, X, y, TrainConfig(iterations=60))
    final = nll(spec, X, y)
    assert final <= trace.nll[0] + 1e-6 or final <= trace.nll.min() + 0.05


def test_trace_shape_and_finiteness():
    X, y = make_data(2)
    _, trace = train_gp(KernelSpec(KernelFamily.MATERN32), X, y, TrainConfig(iterations=25))
    assert len(trace) == 25
    assert trace.hyperparameters.shape == (25, 3)
    assert np.all(np.isfinite(trace.nll))
    assert np.all(np.isfinite(trace.grad_norm))


def test_training_determinism():
    X, y = make_data(3)
    cfg = TrainConfig(iterations=30, seed=9)
    s1, t1 = train_gp(KernelSpec(KernelFamily.RBF), X, y, cfg)
    s2, t2 = train_gp(KernelSpec(KernelFamily.RBF), X, y, cfg)
    assert np.array_equal(s1.params.raw_vector(), s2.params.raw_vector())
    assert np.array_equal(t1.nll, t2.nll)
    assert np.array_equal(t1.hyperparameters, t2.hyperparameters)


def test_divergence_guard():
    rng = np.random.default_rng(0)
    X = rng.uniform(0, 3, 40)[:, None]
    y = rng.standard_normal(40)
    init = spec_of(KernelFamily.RBF, 1.0, 1.0, 1.0)
    with pytest.raises(TrainingError) as exc:
        # absurd learning rate forces the NLL through the ceiling
        train_gp(init, X, y, TrainConfig(iterations=60, learning_rate=10.0, scheduler="constant"))
    assert exc.value.iteration is not None


def test_schedule_warmup_and_restarts():
    cfg = TrainConfig(iterations=100, learning_rate=0.1, num_cycles=3, warmup_fraction=0.1)
    lrs = lr_schedule(cfg)
    assert lrs.shape == (100,)
    assert lrs[0] == 0.0
    warmup = 10
    assert np.all(np.diff(lrs[:warmup]) > 0.0)
    # non-increasing within each cycle, resetting upward at each restart
    resets = [t for t in range(warmup + 1, 100) if lrs[t] > lrs[t - 1] + 1e-12]
    assert len(resets) == 2
    bounds = [warmup] + resets + [100]
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        seg = lrs[lo:hi]
        assert np.all(np.diff(seg) <= 1e-12)


def test_constant_schedule():
    cfg = TrainConfig(iterations=10, learning_rate=0.2, scheduler="constant")
    assert np.all(lr_schedule(cfg) == 0.2)


def test_warm_start_presets():
    sod = WARM_START_PRESETS["sod-table4"]()
    assert (sod.m_train, sod.sub_iterations, sod.sub_lr) == (200, 50, 0.1)
    assert (sod.full_iterations, sod.full_lr) == (5, 0.02)
    ts = WARM_START_PRESETS["twostage-table5"]()
    assert (ts.sub_iterations, ts.full_iterations, ts.full_lr) == (100, 10, 0.1)


def test_warm_start_full_subsample_matches_sequential():
    X, y = make_data(5, n=40)
    ws = WarmStartConfig(m_train=40, sub_iterations=10, sub_lr=0.1, full_iterations=4, full_lr=0.05)
    cfg = TrainConfig(seed=11)
    spec_ws, trace_ws = warm_start_train(KernelSpec(KernelFamily.RBF), X, y, ws, cfg)
    from dataclasses import replace

    s1, t1 = train_gp(KernelSpec(KernelFamily.RBF), X, y, replace(cfg, iterations=10, learning_rate=0.1))
    s2, t2 = train_gp(s1, X, y, replace(cfg, iterations=4, learning_rate=0.05))
    assert np.array_equal(spec_ws.params.raw_vector(), s2.params.raw_vector())
    assert len(trace_ws) == 14


def test_warm_start_factorization_accounting():
    X, y = make_data(6, n=50)
    ws = WarmStartConfig(m_train=20, sub_iterations=7, sub_lr=0.1, full_iterations=3, full_lr=0.05)
    reset_factorization_counts()
    warm_start_train(KernelSpec(KernelFamily.RBF), X, y, ws, TrainConfig(seed=0))
    assert factorization_counts[50] == 3
    assert factorization_counts[20] == 7
    reset_factorization_counts()


def test_warm_start_rejects_oversized_subsample():
    X, y = make_data(7, n=30)
    ws = WarmStartConfig(m_train=31)
    with pytest.raises(InputError):
        warm_start_train(KernelSpec(KernelFamily.RBF), X, y, ws, TrainConfig())


def test_warm_start_consistency_shrinking_gap():
    # distance between subsample-trained and full-trained hyperparameters
    # shrinks as the subsample grows
    spec_true = spec_of(KernelFamily.RBF, 1.0, 1.0, 0.3)
    gaps = {frac: [] for frac in (0.1, 0.5, 1.0)}
    for seed in range(12):
        rng = np.random.default_rng(500 + seed)
        n = 400
        X = rng.uniform(0, 20, n)[:, None]
        y = sample_gp(spec_true, X, 500 + seed)
        cfg = TrainConfig(iterations=40, seed=seed)
        full_spec, _ = train_gp(KernelSpec(KernelFamily.RBF), X, y, cfg)
        full_vec = full_spec.params.constrained_vector()
        for frac in gaps:
            m = int(frac * n)
            from twostage_gp.sampling import random_subsample

            idx = random_subsample(n, m, seed)
            sub_spec, _ = train_gp(KernelSpec(KernelFamily.RBF), X[idx], y[idx], cfg)
            gaps[frac].append(np.linalg.norm(sub_spec.params.constrained_vector() - full_vec))
    medians = [np.median(gaps[f]) for f in (0.1, 0.5, 1.0)]
    assert medians[0] >= medians[1] >= medians[2]


def test_contour_point_grid_matches_nll():
    X, y = make_data(8)
    spec = spec_of(KernelFamily.RBF, 0.8, 1.1, 0.4)
    out = nll_contour(spec, X, y, axis_pair=("lengthscale", "noise"), grids=([0.8], [0.4]))
    assert out["values"].shape == (1, 1)
    assert out["values"][0, 0] == pytest.approx(nll(spec, X, y))


def test_contour_rejects_bad_axes():
    X, y = make_data(9)
    spec = KernelSpec(KernelFamily.RBF)
    with pytest.raises(InputError):
        nll_contour(spec, X, y, axis_pair=("lengthscale", "lengthscale"))
    with pytest.raises(InputError):
        nll_contour(spec, X, y, axis_pair=("lengthscale", "noise"), grids=([], [1.0]))


def test_contour_far_lengthscale_is_worse():
    hits = 0
    for seed in range(10):
        spec_true = spec_of(KernelFamily.RBF, 1.0, 1.0, 0.3)
        rng = np.random.default_rng(600 + seed)
        X = rng.uniform(0, 20, 400)[:, None]
        y = sample_gp(spec_true, X, 600 + seed)
        out = nll_contour(
            spec_true, X, y, axis_pair=("lengthscale", "noise"), grids=([1.0, 10.0], [0.3])
        )
        hits += out["values"][0, 0] < out["values"][1, 0]
    assert hits >= 9
