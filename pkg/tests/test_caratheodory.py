import numpy as np
import pytest

from caratheodory import SubsetDistribution, WeightedSubset, decompose, sample
from core_model import InputError


def _as_sets(dist):
    return {tuple(s.indices.tolist()): (tuple(np.round(s.weights, 9)), round(s.probability, 9)) for s in dist.subsets}


def _check_properties(points, u, dist):
    s, D = points.shape
    assert abs(dist.probabilities.sum() - 1.0) <= 1e-9
    assert max(len(t.indices) for t in dist.subsets) <= D + 1
    if s >= D + 1:
        assert len(dist.subsets) <= max(1, s - D)
    for subset in dist.subsets:
        assert np.all(subset.weights >= 0)
        np.testing.assert_allclose(subset.weights.sum(), 1.0, atol=1e-12)
        np.testing.assert_allclose(subset.weights @ points[subset.indices], dist.barycenter, atol=1e-8)
    np.testing.assert_allclose(dist.marginals(), u, atol=1e-8)


class TestDecompose:
    def test_two_points_on_a_line(self):
        points = np.array([[-1.0], [1.0]])
        dist = decompose(points, [0.5, 0.5])
        assert len(dist.subsets) == 1
        np.testing.assert_array_equal(dist.subsets[0].indices, [0, 1])
        np.testing.assert_allclose(dist.subsets[0].weights, [0.5, 0.5])
        assert dist.subsets[0].probability == 1.0

    def test_three_points_on_a_line(self):
        points = np.array([[0.0], [1.0], [2.0]])
        dist = decompose(points, np.full(3, 1 / 3))
        got = _as_sets(dist)
        assert set(got) == {(0, 2), (1,)}
        np.testing.assert_allclose(got[(0, 2)][0], [0.5, 0.5])
        np.testing.assert_allclose(got[(0, 2)][1], 2 / 3, atol=1e-9)
        np.testing.assert_allclose(got[(1,)][1], 1 / 3, atol=1e-9)
        np.testing.assert_allclose(dist.barycenter, [1.0])

    def test_every_subset_hits_barycenter(self):
        rng = np.random.default_rng(0)
        points = rng.standard_normal((12, 3))
        u = rng.dirichlet(np.ones(12))
        dist = decompose(points, u)
        for _ in range(20):
            idx, w = sample(dist, rng)
            np.testing.assert_allclose(w @ points[idx], u @ points, atol=1e-8)

    def test_random_instances(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            D = int(rng.integers(1, 11))
            s = int(rng.integers(1, 41))
            points = rng.standard_normal((s, D))
            u = rng.dirichlet(np.ones(s))
            dist = decompose(points, u)
            assert not dist.degenerate
            _check_properties(points, u, dist)

    def test_zero_weights_are_never_selected(self):
        rng = np.random.default_rng(2)
        points = rng.standard_normal((10, 2))
        u = np.zeros(10)
        u[[1, 4, 6, 7, 9]] = 0.2
        dist = decompose(points, u)
        _check_properties(points, u, dist)
        for subset in dist.subsets:
            assert set(subset.indices.tolist()) <= {1, 4, 6, 7, 9}

    def test_repeated_points(self):
        points = np.tile([[1.0, 2.0]], (8, 1))
        u = np.full(8, 1 / 8)
        dist = decompose(points, u)
        _check_properties(points, u, dist)

    def test_expectation_of_any_function(self):
        rng = np.random.default_rng(3)
        points = rng.standard_normal((15, 4))
        u = rng.dirichlet(np.ones(15))
        dist = decompose(points, u)
        g = np.sin(points[:, 0]) + points[:, 1] ** 3
        np.testing.assert_allclose(dist.expectation(g), u @ g, atol=1e-8)

    def test_rejects_non_simplex_weights(self):
        with pytest.raises(InputError):
            decompose(np.eye(3), [0.5, 0.5, 0.5])

    def test_rejects_empty(self):
        with pytest.raises(InputError):
            decompose(np.zeros((0, 2)), [])


class TestSample:
    def test_single_subset(self):
        dist = decompose(np.array([[0.0], [1.0]]), [0.3, 0.7])
        rng = np.random.default_rng(0)
        for _ in range(10):
            idx, w = sample(dist, rng)
            np.testing.assert_array_equal(idx, [0, 1])

    def test_zero_probability_subset_never_drawn(self):
        first = WeightedSubset(np.array([0]), np.array([1.0]), 1.0)
        second = WeightedSubset(np.array([1]), np.array([1.0]), 0.0)
        dist = SubsetDistribution(subsets=(first, second), ambient_dim=1, barycenter=np.zeros(1), size=2)
        rng = np.random.default_rng(1)
        assert all(sample(dist, rng)[0][0] == 0 for _ in range(100))

    def test_frequencies(self):
        points = np.array([[0.0], [1.0], [2.0]])
        dist = decompose(points, np.full(3, 1 / 3))
        rng = np.random.default_rng(2)
        hits = sum(len(sample(dist, rng)[0]) == 2 for _ in range(100_000))
        assert abs(hits / 100_000 - 2 / 3) <= 0.01

    def test_same_seed_same_draws(self):
        rng = np.random.default_rng(4)
        points = rng.standard_normal((20, 2))
        dist = decompose(points, rng.dirichlet(np.ones(20)))
        a = [sample(dist, np.random.default_rng(9))[0].tolist() for _ in range(3)]
        b = [sample(dist, np.random.default_rng(9))[0].tolist() for _ in range(3)]
        assert a == b
