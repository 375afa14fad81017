import numpy as np
import pytest

from sinkhorn_inference.measures import (DiscreteMeasure, make_grid, squared_euclidean_cost,
                                         uniform_measure)


@pytest.fixture
def grid5():
    return make_grid(5)


@pytest.fixture
def cost5(grid5):
    return squared_euclidean_cost(grid5)


@pytest.fixture
def uniform25():
    return uniform_measure(25)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_interior(rng, N):
    """Random measure with every weight bounded away from zero"""
    w = rng.uniform(0.2, 1.0, size=N)
    return DiscreteMeasure(w / w.sum())
