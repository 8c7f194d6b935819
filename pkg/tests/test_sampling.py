import numpy as np
import pytest

from twostage_gp.exceptions import InputError
from twostage_gp.sampling import design_stats, fps, make_folds, random_subsample


def brute_force_fps(X, k):
    """Independent greedy re-implementation used as the oracle."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    centroid = X.mean(axis=0)
    d0 = ((X - centroid) ** 2).sum(axis=1)
    sel = [int(np.argmin(d0))]
    for _ in range(k - 1):
        best_j, best_d = None, -1.0
        for j in range(n):
            dj = min(np.sqrt(((X[j] - X[s]) ** 2).sum()) for s in sel)
            if dj > best_d:
                best_d, best_j = dj, j
        sel.append(best_j)
    return np.array(sel)


def test_fps_line_first_point_is_centroid():
    X = np.arange(5.0)[:, None]
    assert fps(X, 1).indices.tolist() == [2]


def test_fps_line_three_points_tie_to_low_index():
    X = np.arange(5.0)[:, None]
    assert fps(X, 3).indices.tolist() == [2, 0, 4]


def test_fps_full_selection_is_permutation(rng):
    X = rng.normal(size=(17, 3))
    idx = fps(X, 17).indices
    assert sorted(idx.tolist()) == list(range(17))


def test_fps_rejects_bad_k(rng):
    X = rng.normal(size=(5, 1))
    with pytest.raises(InputError):
        fps(X, 6)
    with pytest.raises(InputError):
        fps(X, 0)


def test_fps_matches_brute_force(rng):
    for _ in range(10):
        n = int(rng.integers(5, 60))
        X = rng.normal(size=(n, int(rng.integers(1, 4))))
        k = int(rng.integers(1, n + 1))
        assert np.array_equal(fps(X, k).indices, brute_force_fps(X, k))


def test_fps_fill_trace_non_increasing(rng):
    X = rng.normal(size=(50, 2))
    trace = fps(X, 30).fill_trace
    assert trace[0] == np.inf
    assert np.all(np.diff(trace[1:]) <= 1e-12)


def test_fps_greedy_step_optimality(rng):
    X = rng.normal(size=(40, 2))
    sample = fps(X, 12)
    idx = sample.indices
    for t in range(1, 12):
        sel = X[idx[:t]]
        d = np.sqrt(((X[:, None, :] - sel[None, :, :]) ** 2).sum(axis=2)).min(axis=1)
        assert d[idx[t]] == pytest.approx(d.max())


def test_fps_separation_non_increasing_in_k(rng):
    X = rng.normal(size=(60, 2))
    sample = fps(X, 40)
    qs = [design_stats(X, sample.indices[:k])[0] for k in range(2, 41)]
    assert np.all(np.diff(qs) <= 1e-12)


def test_design_stats_full_grid():
    X = np.arange(10.0)[:, None]
    q, h = design_stats(X, np.arange(10))
    assert q == pytest.approx(0.5)
    assert h == pytest.approx(0.0)


def test_design_stats_line_subset():
    X = np.arange(5.0)[:, None]
    q, h = design_stats(X, [2, 0, 4])
    assert q == pytest.approx(1.0)
    assert h == pytest.approx(1.0)


def test_design_stats_needs_two_indices():
    with pytest.raises(InputError):
        design_stats(np.arange(5.0)[:, None], [2])


def test_fps_separation_beats_random_median():
    fps_q, rand_q = [], []
    for seed in range(20):
        rng = np.random.default_rng(400 + seed)
        X = rng.uniform(0, 1, size=(200, 2))
        fps_q.append(design_stats(X, fps(X, 32).indices)[0])
        rand_q.append(design_stats(X, random_subsample(200, 32, seed))[0])
    assert np.median(fps_q) >= np.median(rand_q)


def test_random_subsample_full_draw_is_permutation():
    idx = random_subsample(10, 10, seed=1)
    assert sorted(idx.tolist()) == list(range(10))


def test_random_subsample_rejects_bad_sizes():
    with pytest.raises(InputError):
        random_subsample(10, 0, seed=1)
    with pytest.raises(InputError):
        random_subsample(10, 11, seed=1)


def test_random_subsample_deterministic():
    a = random_subsample(100, 20, seed=7)
    b = random_subsample(100, 20, seed=7)
    assert np.array_equal(a, b)
    assert len(set(a.tolist())) == 20


def test_random_subsample_uniform_frequencies():
    counts = np.zeros(4)
    for seed in range(10000):
        counts[random_subsample(4, 1, seed=seed)[0]] += 1
    freq = counts / 10000.0
    assert np.all((freq >= 0.23) & (freq <= 0.27))


def test_make_folds_partition():
    folds = make_folds(10, n_folds=1, train_fraction=0.8, seed_base=0)
    f = folds[0]
    assert len(f.train) == 8 and len(f.test) == 2
    assert set(f.train.tolist()) | set(f.test.tolist()) == set(range(10))
    assert not set(f.train.tolist()) & set(f.test.tolist())


def test_make_folds_deterministic():
    a = make_folds(50, 5, 0.9, seed_base=3)
    b = make_folds(50, 5, 0.9, seed_base=3)
    for fa, fb in zip(a, b):
        assert np.array_equal(fa.train, fb.train)
        assert np.array_equal(fa.test, fb.test)


def test_make_folds_coverage():
    folds = make_folds(1000, 20, 0.9, seed_base=0)
    test_union = set()
    for f in folds:
        assert len(f.test) == 100
        test_union |= set(f.test.tolist())
    assert len(test_union) >= 850


def test_make_folds_rejects_degenerate():
    with pytest.raises(InputError):
        make_folds(10, 0, 0.9, 0)
    with pytest.raises(InputError):
        make_folds(10, 2, 1.0, 0)
    with pytest.raises(InputError):
        make_folds(2, 1, 0.1, 0)
