import math

import numpy as np
import pytest

from wdrmdp.ambiguity import AmbiguityConfig, KernelSet
from wdrmdp.instances import GarnetConfig, garnet, sample_kernels
from wdrmdp.mdp import MdpInstance

GEOMETRIES = [("l2", 2), ("l1", 1), ("linf", 1), ("l2", math.inf), ("l1", math.inf), ("linf", math.inf)]


def geometry_id(g):
    return f"{g[0]}-{'inf' if g[1] == math.inf else g[1]}"


def small_problem(S=4, A=2, N=2, seed=0, discount=0.8, branching=0.5):
    """Garnet instance with ``N`` perturbed kernels."""
    inst, y0 = garnet(GarnetConfig(S, A, branching, seed=seed, discount=discount))
    return inst, sample_kernels(y0, N, seed=seed + 100)


def random_problem(rng, S, A, N, discount=0.8, cost_range=(0.0, 1.0), grid=None):
    """Fully random instance; kernels optionally rounded onto a grid of step ``grid``."""
    cost = rng.uniform(*cost_range, size=(S, A))
    if grid is None:
        ys = rng.dirichlet(np.ones(S), size=(N, S, A))
    else:
        q = np.round(rng.integers(0, int(round(1 / grid)) + 1, size=(N, S, A)) * grid, 12)
        ys = np.stack([q, 1.0 - q], axis=-1)
    return MdpInstance(cost, np.full(S, 1.0 / S), discount), KernelSet(ys)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cfg_of(g, theta):
    return AmbiguityConfig(g[0], g[1], theta)
