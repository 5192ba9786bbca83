import numpy as np
import pytest

from tiot import (
    CostPair,
    InvalidInputError,
    TimeSeries,
    build_cost_pair,
    combine,
    euclidean_dist,
    lift_to_measure,
    zscore_normalize,
)

from conftest import measure


def test_zscore_population_std():
    s = zscore_normalize(TimeSeries.from_values([1.0, 2.0, 3.0]))
    assert np.allclose(s.values[:, 0], [-1.224745, 0.0, 1.224745], atol=1e-6)


def test_zscore_constant_series_maps_to_zero():
    s = zscore_normalize(TimeSeries.from_values([5.0, 5.0, 5.0]))
    assert np.array_equal(s.values[:, 0], np.zeros(3))


def test_empty_series_rejected():
    with pytest.raises(InvalidInputError):
        TimeSeries.from_values([])


def test_series_is_immutable():
    s = TimeSeries.from_values([1.0, 2.0])
    with pytest.raises(ValueError):
        s.values[0, 0] = 3.0


def test_nonfinite_values_rejected():
    with pytest.raises(InvalidInputError):
        TimeSeries.from_values([1.0, np.nan])


def test_lift_default_uniform():
    m = lift_to_measure(TimeSeries.from_values([1.0, 2.0, 3.0]))
    assert np.allclose(m.weights, 1 / 3)


def test_lift_explicit_weights():
    m = lift_to_measure(TimeSeries.from_values([1.0, 2.0]), [0.5, 0.5])
    assert np.array_equal(m.weights, [0.5, 0.5])


@pytest.mark.parametrize("weights", [[0.5, 0.6], [1.0, 0.0], [1.5, -0.5]])
def test_lift_bad_weights(weights):
    with pytest.raises(InvalidInputError):
        lift_to_measure(TimeSeries.from_values([1.0, 2.0]), weights)


def test_example_b_costs(example_b):
    _, _, cp = example_b
    assert np.allclose(cp.gamma, [[2, 0], [0, 2]])
    assert np.allclose(cp.phi, [[0, 2], [2, 0]])
    assert cp.c_inf == pytest.approx(2.0)
    assert cp.ctilde_inf == pytest.approx(2.0)


def test_identical_measures_zero_diagonal():
    rng = np.random.default_rng(3)
    alpha = measure(rng.normal(size=(4, 2)), rng.normal(size=4))
    cp = build_cost_pair(alpha, alpha)
    assert np.allclose(np.diag(cp.gamma), 0) and np.allclose(np.diag(cp.phi), 0)


def test_p1_costs():
    cp = build_cost_pair(measure([[0.0]], [0.0]), measure([[3.0]], [4.0]), p=1)
    assert cp.gamma[0, 0] == pytest.approx(3.0)
    assert cp.phi[0, 0] == pytest.approx(4.0)


def test_p_norm_multivariate():
    cp = build_cost_pair(measure([[0.0, 0.0]], [0.0]), measure([[1.0, 2.0]], [0.0]), p=3)
    assert cp.gamma[0, 0] == pytest.approx(1 + 8)


def test_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        build_cost_pair(measure([[0.0]], [0.0]), measure([[0.0, 1.0]], [0.0]))


def test_p_below_one_rejected():
    with pytest.raises(InvalidInputError):
        build_cost_pair(measure([[0.0]], [0.0]), measure([[0.0]], [0.0]), p=0.5)


def test_combine(example_b):
    _, _, cp = example_b
    assert np.array_equal(combine(cp, 0.0), cp.phi)
    assert np.array_equal(combine(cp, 1.0), cp.gamma)
    assert combine(cp, 0.5)[0, 1] == pytest.approx(1.0)
    for w in (-0.1, 1.1):
        with pytest.raises(InvalidInputError):
            combine(cp, w)


def test_costpair_shape_mismatch():
    with pytest.raises(InvalidInputError):
        CostPair(np.zeros((2, 2)), np.zeros((2, 3)))


def test_euclidean():
    a = TimeSeries.from_values([0.0, 0.0])
    b = TimeSeries.from_values([3.0, 4.0])
    assert euclidean_dist(a, b) == pytest.approx(5.0)
    assert euclidean_dist(a, a) == 0.0
    with pytest.raises(InvalidInputError):
        euclidean_dist(TimeSeries.from_values([1.0] * 3), TimeSeries.from_values([1.0] * 4))
