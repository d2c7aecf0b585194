import numpy as np
import pytest

from mvsde import TimeGrid, make_kernel, sample_initial


@pytest.fixture
def linear_kernel():
    return make_kernel("linear", {"a": -1.0, "c": 0.5, "s": 0.2})


@pytest.fixture
def loglip_kernel():
    return make_kernel("loglip")


@pytest.fixture
def grid64():
    return TimeGrid.from_step(1.0, 2**-6)


@pytest.fixture
def gaussian_init():
    def make(seed: int, n: int, dim: int = 1, mean: float = 1.0, cov: float = 0.04):
        return sample_initial(seed, "gaussian", {"mean": mean, "cov": cov}, n, dim)

    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
