import numpy as np
import pytest

from twostage_gp.exceptions import InputError
from twostage_gp.kernels import (
    Hyperparameters,
    KernelFamily,
    KernelSpec,
    eval_base,
    gram_gradients,
    gram_matrix,
    softplus,
    softplus_inv,
)

FAMILIES = list(KernelFamily)


def test_softplus_default_is_ln2():
    h = Hyperparameters()
    assert h.lengthscale == pytest.approx(np.log(2.0))
    assert h.outputscale == pytest.approx(np.log(2.0))
    assert h.noise == pytest.approx(np.log(2.0))


def test_softplus_roundtrip():
    vals = np.array([1e-3, 0.5, 1.0, 7.3, 40.0])
    assert np.allclose(softplus(softplus_inv(vals)), vals, rtol=1e-12)


def test_softplus_positive_for_negative_raw():
    assert softplus(-30.0) > 0.0


def test_eval_base_zero_distance_is_one():
    for fam in FAMILIES:
        assert eval_base(fam, 1.0, [0.3, -0.2], [0.3, -0.2]) == pytest.approx(1.0)


def test_eval_base_rbf_unit_distance():
    # exp(-||d||^2 / l^2) with no 1/2 factor
    assert eval_base(KernelFamily.RBF, 1.0, [0.0], [1.0]) == pytest.approx(np.exp(-1.0))


def test_eval_base_matern32_unit_distance():
    expected = (1.0 + np.sqrt(3.0)) * np.exp(-np.sqrt(3.0))  # = 0.4833577...
    assert eval_base(KernelFamily.MATERN32, 1.0, [0.0], [1.0]) == pytest.approx(expected)


def test_eval_base_matern12_unit_distance():
    assert eval_base(KernelFamily.MATERN12, 1.0, [0.0], [1.0]) == pytest.approx(np.exp(-1.0))


def test_eval_base_rejects_dimension_mismatch():
    with pytest.raises(InputError):
        eval_base(KernelFamily.RBF, 1.0, [0.0, 1.0], [0.0])


def test_eval_base_rejects_nonpositive_lengthscale():
    with pytest.raises(InputError):
        eval_base(KernelFamily.RBF, 0.0, [0.0], [1.0])
    with pytest.raises(InputError):
        eval_base(KernelFamily.RBF, -2.0, [0.0], [1.0])


def test_gram_single_point_diagonal():
    spec = KernelSpec(KernelFamily.RBF, Hyperparameters.from_constrained(1.0, 1.0, 1.0))
    K = gram_matrix(spec, [[0.0]], include_noise=True)
    assert K.shape == (1, 1)
    assert K[0, 0] == pytest.approx(2.0)


def test_gram_zero_outputscale_is_noise_identity():
    for fam in FAMILIES:
        spec = KernelSpec(fam, Hyperparameters.from_constrained(1.0, 1e-15, 0.7))
        K = gram_matrix(spec, np.arange(5.0)[:, None], include_noise=True)
        assert np.allclose(K, 0.7 ** 2 * np.eye(5), atol=1e-12)


def test_gram_two_point_rbf():
    spec = KernelSpec(KernelFamily.RBF, Hyperparameters.from_constrained(1.0, 1.0, 1e-12))
    K = gram_matrix(spec, np.array([[0.0], [1.0]]), include_noise=False)
    e = np.exp(-1.0)
    assert np.allclose(K, [[1.0, e], [e, 1.0]], atol=1e-12)


def test_gram_rejects_nonfinite():
    spec = KernelSpec(KernelFamily.RBF)
    with pytest.raises(InputError):
        gram_matrix(spec, [[np.nan], [1.0]])


def test_gram_exact_symmetry(rng):
    X = rng.normal(size=(40, 4))
    for fam in FAMILIES:
        spec = KernelSpec(fam, Hyperparameters.from_constrained(0.8, 1.3, 0.2))
        K = gram_matrix(spec, X)
        assert np.array_equal(K, K.T)


def test_gram_diagonal_values(rng):
    X = rng.normal(size=(10, 2))
    spec = KernelSpec(KernelFamily.MATERN32, Hyperparameters.from_constrained(0.5, 2.0, 0.3))
    K = gram_matrix(spec, X, include_noise=True)
    assert np.allclose(np.diag(K), 2.0 ** 2 + 0.3 ** 2)
    K0 = gram_matrix(spec, X, include_noise=False)
    assert np.allclose(np.diag(K0), 4.0)


def test_gram_positive_semidefinite(rng):
    for fam in FAMILIES:
        for trial in range(5):
            X = rng.normal(size=(rng.integers(5, 50), rng.integers(1, 6)))
            sf, sn = rng.uniform(0.3, 2.0), rng.uniform(0.05, 0.5)
            spec = KernelSpec(fam, Hyperparameters.from_constrained(rng.uniform(0.3, 2.0), sf, sn))
            w = np.linalg.eigvalsh(gram_matrix(spec, X, include_noise=False))
            assert w.min() >= -1e-8 * sf ** 2
            w = np.linalg.eigvalsh(gram_matrix(spec, X, include_noise=True))
            assert w.min() >= sn ** 2 - 1e-8


def test_base_kernels_decay_in_distance(rng):
    d = np.sort(rng.uniform(0.01, 8.0, 40))
    for fam in FAMILIES:
        vals = np.array([eval_base(fam, 1.3, [0.0], [di]) for di in d])
        assert np.all(np.diff(vals) < 0.0)
        assert np.all((vals > 0.0) & (vals <= 1.0))


def test_gradient_noise_offdiagonal_zero(rng):
    X = rng.normal(size=(6, 2))
    for fam in FAMILIES:
        spec = KernelSpec(fam, Hyperparameters.from_constrained(0.9, 1.1, 0.4))
        _, _, dK_dn = gram_gradients(spec, X)
        off = dK_dn - np.diag(np.diag(dK_dn))
        assert np.all(off == 0.0)


def test_gradient_lengthscale_diagonal_zero(rng):
    X = rng.normal(size=(6, 2))
    for fam in FAMILIES:
        spec = KernelSpec(fam, Hyperparameters.from_constrained(0.9, 1.1, 0.4))
        dK_dl, _, _ = gram_gradients(spec, X)
        assert np.all(np.diag(dK_dl) == 0.0)


def _fd_gram_gradients(spec, X, step=1e-5):
    raw = spec.params.raw_vector()
    out = []
    for i in range(3):
        e = np.zeros(3)
        e[i] = step
        up = gram_matrix(spec.with_params(Hyperparameters.from_raw_vector(raw + e)), X)
        dn = gram_matrix(spec.with_params(Hyperparameters.from_raw_vector(raw - e)), X)
        out.append((up - dn) / (2.0 * step))
    return out


def test_gram_gradients_match_finite_differences_small(rng):
    X = rng.normal(size=(5, 2))
    spec = KernelSpec(KernelFamily.RBF, Hyperparameters(0.1, -0.3, 0.2))
    analytic = gram_gradients(spec, X)
    numeric = _fd_gram_gradients(spec, X)
    for a, nmat in zip(analytic, numeric):
        scale = np.maximum(np.abs(nmat), 1e-8)
        assert np.max(np.abs(a - nmat) / scale) <= 1e-6


@pytest.mark.parametrize("family", FAMILIES)
def test_gram_gradients_match_finite_differences_fuzz(family):
    rng = np.random.default_rng(hash(family.value) % 2 ** 32)
    for _ in range(20):
        X = rng.normal(size=(rng.integers(3, 12), rng.integers(1, 4)))
        spec = KernelSpec(family, Hyperparameters(*rng.uniform(-1.0, 1.5, 3)))
        analytic = gram_gradients(spec, X)
        numeric = _fd_gram_gradients(spec, X)
        for a, nmat in zip(analytic, numeric):
            scale = np.maximum(np.abs(nmat), 1e-7)
            assert np.max(np.abs(a - nmat) / scale) <= 1e-5


def test_family_from_name():
    assert KernelFamily.from_name("rbf") is KernelFamily.RBF
    assert KernelFamily.from_name("MATERN32") is KernelFamily.MATERN32
    with pytest.raises(InputError):
        KernelFamily.from_name("periodic")
