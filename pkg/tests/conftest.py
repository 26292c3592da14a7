import numpy as np
import pytest

from panelms import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile (or load from cache) the numba kernels before any timing."""
    _kernels.warmup()


@pytest.fixture()
def rng():
    return np.random.default_rng(20240901)
