import numpy as np
import pytest
import scipy.linalg as sla

from twostage_gp.kernels import Hyperparameters, KernelSpec, gram_matrix


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def sample_gp(spec: KernelSpec, X, seed):
    """Draw y ~ N(0, K(X, X)) including the noise term."""
    K = gram_matrix(spec, X, include_noise=True)
    L = sla.cholesky(K, lower=True)
    return L @ np.random.default_rng(seed).standard_normal(X.shape[0])


def spec_of(family, l, sf, sn):
    return KernelSpec(family, Hyperparameters.from_constrained(l, sf, sn))
