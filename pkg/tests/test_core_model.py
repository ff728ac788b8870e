import numpy as np
import pytest

from core_model import (
    DegenerateInputError,
    DimensionMismatchError,
    InputError,
    QueryDirection,
    SketchReport,
    WeightedPointSet,
    exact_affine_power,
    exact_hinge,
    exact_lp_power,
    normalize_weights,
    query_net,
    sup_error_on_net,
)
from tensor_algebra import apply_direction, tensor_power, weighted_sum


class TestWeightedPointSet:
    def test_lengths_must_match(self):
        with pytest.raises(InputError):
            WeightedPointSet.from_rows([[1.0, 0.0], [0.0, 1.0]], weights=[1.0])

    def test_negative_weight_rejected(self):
        with pytest.raises(InputError):
            WeightedPointSet.from_rows([[1.0, 0.0]], weights=[-1.0])

    def test_p_below_one_rejected(self):
        with pytest.raises(InputError):
            WeightedPointSet.from_rows([[1.0, 0.0]], p=0.5)

    def test_normalized_flag_checked(self):
        P = WeightedPointSet.from_rows([[1.0], [2.0]], weights=[0.5, 0.6])
        with pytest.raises(InputError):
            P.with_weights(P.weights, normalized=True)

    def test_zero_rows_are_kept(self):
        P = WeightedPointSet.from_rows([[0.0, 0.0], [1.0, 1.0]], weights=[2.0, 1.0])
        assert len(P) == 2
        assert P.total_weight == 3.0

    def test_points_are_read_only(self):
        P = WeightedPointSet.from_rows([[1.0, 2.0]])
        with pytest.raises(ValueError):
            P.points[0, 0] = 5.0

    def test_concat_dimension_mismatch(self):
        P = WeightedPointSet.from_rows([[1.0, 2.0]])
        Q = WeightedPointSet.from_rows([[1.0, 2.0, 3.0]])
        with pytest.raises(DimensionMismatchError):
            P.concat(Q)

    def test_empty_set(self):
        P = WeightedPointSet.empty(3)
        assert len(P) == 0 and P.dim == 3
        assert exact_lp_power(P, [1.0, 0.0, 0.0]) == 0.0


class TestExactLpPower:
    def test_identity_case(self):
        P = WeightedPointSet.from_rows([[1.0, 0.0]], p=1)
        assert exact_lp_power(P, [1.0, 0.0]) == 1.0

    def test_orthonormal_rows_give_squared_norm(self):
        P = WeightedPointSet.from_rows([[1.0, 0.0], [0.0, 1.0]], p=2)
        np.testing.assert_allclose(exact_lp_power(P, [0.6, 0.8]), 1.0, rtol=1e-12)

    def test_cubic_scalar(self):
        P = WeightedPointSet.from_rows([[1.0, 2.0]], p=3)
        x = np.array([3.0, 1.0]) / np.sqrt(10)
        np.testing.assert_allclose(exact_lp_power(P, x), 125 / 10**1.5, rtol=1e-12)
        assert abs(exact_lp_power(P, x) - 3.9528) < 1e-4

    def test_dimension_mismatch(self):
        P = WeightedPointSet.from_rows([[1.0, 2.0]])
        with pytest.raises(DimensionMismatchError):
            exact_lp_power(P, [1.0, 2.0, 3.0])

    def test_accepts_query_direction(self):
        P = WeightedPointSet.from_rows([[2.0, 0.0]], p=2)
        assert exact_lp_power(P, QueryDirection.unit([3.0, 0.0])) == pytest.approx(4.0)

    def test_homogeneity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = int(rng.integers(1, 5))
            p = float(rng.uniform(1, 4))
            P = WeightedPointSet.from_rows(rng.standard_normal((20, d)), rng.uniform(0, 2, 20), p=p)
            x = rng.standard_normal(d)
            c = float(rng.uniform(-3, 3))
            np.testing.assert_allclose(exact_lp_power(P, c * x), abs(c) ** p * exact_lp_power(P, x), rtol=1e-9)

    def test_even_p_matches_tensor_polynomial(self):
        rng = np.random.default_rng(1)
        for p in (2, 4, 6):
            d = 3
            P = WeightedPointSet.from_rows(rng.standard_normal((15, d)), rng.uniform(0, 1, 15), p=p)
            S = weighted_sum([tensor_power(y, p) for y in P.points], P.weights)
            x = rng.standard_normal(d)
            np.testing.assert_allclose(apply_direction(S, x), exact_lp_power(P, x), rtol=1e-9)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        P = WeightedPointSet.from_rows(rng.standard_normal((10, 3)), p=1.5)
        X = rng.standard_normal((7, 3))
        np.testing.assert_allclose(exact_lp_power(P, X), [exact_lp_power(P, x) for x in X], rtol=1e-12)


class TestOtherOracles:
    def test_affine_power(self):
        P = WeightedPointSet.from_rows([[3.0]], p=1)
        assert exact_affine_power(P, [2.0], 1.0) == 5.0

    def test_hinge(self):
        P = WeightedPointSet.from_rows([[1.0, 0.0], [-1.0, 0.0]], weights=[1.0, 3.0])
        assert exact_hinge(P, [2.0, 0.0]) == 2.0
        assert exact_hinge(P, [-1.0, 0.0]) == 3.0

    def test_hinge_pair_gives_l1(self):
        rng = np.random.default_rng(3)
        P = WeightedPointSet.from_rows(rng.standard_normal((30, 2)))
        neg = WeightedPointSet.from_rows(-P.points)
        x = rng.standard_normal(2)
        np.testing.assert_allclose(exact_hinge(P, x) + exact_hinge(neg, x), exact_lp_power(P, x), rtol=1e-12)


class TestNormalizeWeights:
    @pytest.mark.parametrize(
        "weights, expected, total",
        [
            ([2.0, 2.0], [0.5, 0.5], 4.0),
            ([1.0], [1.0], 1.0),
            ([0.0, 3.0, 1.0], [0.0, 0.75, 0.25], 4.0),
        ],
    )
    def test_examples(self, weights, expected, total):
        P = WeightedPointSet.from_rows(np.ones((len(weights), 2)), weights=weights)
        normalized, got_total = normalize_weights(P)
        np.testing.assert_allclose(normalized.weights, expected)
        assert got_total == total
        assert normalized.normalized
        np.testing.assert_array_equal(normalized.points, P.points)

    def test_all_zero_weights(self):
        P = WeightedPointSet.from_rows(np.ones((3, 2)), weights=[0.0, 0.0, 0.0])
        with pytest.raises(DegenerateInputError):
            normalize_weights(P)


class TestQueryDirection:
    def test_parse(self):
        q = QueryDirection.parse("1, 2.5,-3")
        np.testing.assert_array_equal(q.x, [1.0, 2.5, -3.0])

    def test_parse_garbage(self):
        with pytest.raises(InputError):
            QueryDirection.parse("1,abc")

    def test_unit_query(self):
        q = QueryDirection.unit([3.0, 4.0])
        assert abs(np.linalg.norm(q.x) - 1.0) <= 1e-12

    def test_unit_zero_rejected(self):
        with pytest.raises(InputError):
            QueryDirection.unit([0.0, 0.0])

    def test_report_bound_nonnegative(self):
        with pytest.raises(ValueError):
            SketchReport(estimate=1.0, additive_bound=-0.1)


class TestSupErrorOnNet:
    def setup_method(self):
        rng = np.random.default_rng(4)
        self.P = WeightedPointSet.from_rows(rng.standard_normal((25, 2)), rng.uniform(0, 1, 25), p=1)

    def test_self_comparison_is_zero(self):
        sup, _ = sup_error_on_net(self.P, lambda X: exact_lp_power(self.P, X), 0.05, seed=0)
        assert sup == 0.0

    def test_constant_shift(self):
        sup, _ = sup_error_on_net(self.P, lambda X: exact_lp_power(self.P, X) + 0.1, 0.05, seed=0)
        assert abs(sup - 0.1) <= 1e-12

    def test_unbatched_evaluation(self):
        sup, _ = sup_error_on_net(self.P, lambda x: exact_lp_power(self.P, x) + 0.1, 0.1, seed=0, batched=False)
        assert abs(sup - 0.1) <= 1e-12

    def test_direction_count_on_circle(self):
        _, count = sup_error_on_net(self.P, lambda X: exact_lp_power(self.P, X), 0.01, seed=0)
        assert count >= 629

    def test_finer_net_never_reports_less(self):
        def sketch(X):
            return exact_lp_power(self.P, X) * (1 + 0.05 * np.sin(7 * np.arctan2(X[:, 1], X[:, 0])))

        sups = [sup_error_on_net(self.P, sketch, r, seed=5)[0] for r in (0.2, 0.1, 0.05, 0.01)]
        assert all(a <= b for a, b in zip(sups, sups[1:]))

    def test_bad_resolution(self):
        with pytest.raises(InputError):
            sup_error_on_net(self.P, lambda X: X[:, 0], 1.5, seed=0)

    def test_net_is_unit(self):
        net = query_net(4, 0.5, seed=1)
        np.testing.assert_allclose(np.linalg.norm(net, axis=1), 1.0, atol=1e-12)
