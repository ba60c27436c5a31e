import numpy as np
import pytest

from terra_nav import gp as gpmod
from terra_nav import model_error
from terra_nav.kernels import RBFKernel


@pytest.fixture(scope="session")
def small_oracle():
    """Perturbation oracle over a coarse 3-points-per-axis context grid."""
    ranges = model_error.ContextRanges(points_per_axis=3)
    return model_error.PerturbationOracle(ranges=ranges)


@pytest.fixture(scope="session")
def small_error_model(small_oracle):
    """Deviation GP trained on the coarse grid (729 points, no tuning)."""
    rng = np.random.default_rng(0)
    X, y = model_error.generate_training_set(small_oracle,
                                             small_oracle.ranges, rng)
    kernel = RBFKernel(sigma_f2=1e-4, lengthscale=0.4, dim=6)
    return gpmod.fit(X, y, kernel, 1e-6)


class StubTerrain:
    """Terrain-model stub with explicit mean/var callables."""

    def __init__(self, mean_fn=None, var_fn=None):
        self._mean = mean_fn or (lambda pts: np.zeros(len(pts)))
        self._var = var_fn or (lambda pts: np.ones(len(pts)))

    def mean(self, pts):
        return np.asarray(self._mean(np.atleast_2d(pts)), dtype=float)

    def var(self, pts):
        return np.asarray(self._var(np.atleast_2d(pts)), dtype=float)


@pytest.fixture
def flat_terrain_model():
    return StubTerrain()
