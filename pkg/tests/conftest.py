import itertools
import math

import numpy as np
import pytest

from tiot import DiscreteMeasure, build_cost_pair

SQ2 = math.sqrt(2.0)


def measure(features, times, weights=None):
    features = np.asarray(features, dtype=float)
    if weights is None:
        weights = np.full(len(times), 1.0 / len(times))
    return DiscreteMeasure(features, np.asarray(times, dtype=float), np.asarray(weights, dtype=float))


def random_measure(rng, size, dim=1, uniform=False, scale=1.0):
    feats = rng.normal(scale=scale, size=(size, dim))
    times = rng.normal(scale=scale, size=size)
    if uniform:
        w = np.full(size, 1.0 / size)
    else:
        w = rng.uniform(0.2, 1.0, size)
        w /= w.sum()
    return DiscreteMeasure(feats, times, w)


def brute_force_assignment(cost):
    """Minimum over permutations of ``mean(cost[i, sigma(i)])``."""
    n = cost.shape[0]
    return min(sum(cost[i, s[i]] for i in range(n)) for s in itertools.permutations(range(n))) / n


@pytest.fixture
def example_a():
    alpha = measure([[0.0], [1.0]], [0.0, 1.0])
    beta = measure([[0.5], [0.5]], [0.0, 1.0])
    return alpha, beta, build_cost_pair(alpha, beta)


@pytest.fixture
def example_b():
    alpha = measure([[SQ2], [0.0]], [0.0, SQ2])
    beta = measure([[0.0], [SQ2]], [0.0, SQ2])
    return alpha, beta, build_cost_pair(alpha, beta)
