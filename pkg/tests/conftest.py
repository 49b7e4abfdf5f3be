import numpy as np
import pytest

from ivqr.models import ClusteredDataset, ProfileGrid


def linear_design(n=400, J=8, seed=0, beta=2.0):
    """
    Location shift model ``y = 1 + beta x + 0.5 w + u`` with an endogenous x
    and a strong instrument z; beta(tau) = beta at the median.
    """
    rng = np.random.default_rng(seed)
    cluster = np.repeat(np.arange(J), n // J)
    n = cluster.size
    z = rng.normal(size=n)
    w = rng.normal(size=n)
    u = 0.5 * rng.normal(size=n)
    x = z + u + 0.5 * rng.normal(size=n)
    y = 1.0 + beta * x + 0.5 * w + u
    return ClusteredDataset(y, x, w, z, cluster)


@pytest.fixture
def large_design():
    return linear_design(n=400, J=8, seed=0)


@pytest.fixture
def small_design():
    return linear_design(n=120, J=5, seed=1)


@pytest.fixture
def coarse_grid():
    return ProfileGrid(1.4, 2.6, 0.05)


@pytest.fixture
def isolated_home(tmp_path, monkeypatch):
    """Keep a user-level ~/.ivqr_config.yaml out of the tests."""
    monkeypatch.setenv("HOME", str(tmp_path))
    monkeypatch.delenv("IVQR_NUM_THREADS", raising=False)
    return tmp_path


@pytest.fixture
def make_design():
    return linear_design
