import numpy as np
import pytest

from nrdr.services.datasets import gen_ring, gen_strip
from nrdr.services.embedding import nonredundant_embed, spectral_embed
from nrdr.services.kernels import KernelKind, KernelSpec


@pytest.fixture(scope="session")
def strip_cloud():
    return gen_strip(2000, 2.5, 1.0, seed=7)


@pytest.fixture(scope="session")
def strip_kernel(strip_cloud):
    return KernelSpec(KernelKind.LEM, k=10).build(strip_cloud)


@pytest.fixture(scope="session")
def strip_baseline(strip_kernel):
    return spectral_embed(strip_kernel, 4)


@pytest.fixture(scope="session")
def strip_nonredundant(strip_kernel):
    return nonredundant_embed(strip_kernel, 2, alpha=0.3, keep_operators=True)


@pytest.fixture(scope="session")
def ring_cloud():
    return gen_ring(2000, 5.0, 1.0, seed=3)


@pytest.fixture(scope="session")
def ring_kernel(ring_cloud):
    return KernelSpec(KernelKind.LEM, k=10).build(ring_cloud)


@pytest.fixture(scope="session")
def ring_baseline(ring_kernel):
    return spectral_embed(ring_kernel, 3)


@pytest.fixture(scope="session")
def ring_nonredundant(ring_kernel):
    return nonredundant_embed(ring_kernel, 3, alpha=0.3, keep_operators=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
