import numpy as np
import pytest

from core_model import DegenerateInputError, WeightedPointSet
from harmonics_lab import beta_dp
from linear_rounding import (
    certify_rounding,
    john_round,
    online_sensitivity_sup,
    sensitivity_upper,
    well_conditioned_basis,
)
from sphere_geometry import random_directions


def _norms(A, T, units):
    return np.sum(np.abs(units @ (A.scaled_rows() @ T).T) ** A.p, axis=1) ** (1 / A.p)


class TestJohnRound:
    def test_p2_is_exact(self):
        rng = np.random.default_rng(0)
        A = WeightedPointSet.from_rows(rng.standard_normal((50, 3)), rng.uniform(0.5, 2, 50), p=2)
        rounding = john_round(A)
        assert abs(rounding.distortion - 1.0) <= 1e-9
        assert rounding.certified
        np.testing.assert_allclose(_norms(A, rounding.T, random_directions(rng, 100, 3)), 1.0, atol=1e-9)

    def test_cross_polytope(self):
        A = WeightedPointSet.from_rows(np.eye(2), p=1)
        rounding = john_round(A)
        assert rounding.certified
        assert rounding.distortion <= np.sqrt(6) * 1.1
        # the rounded body stays a scaled square: T is a multiple of an orthogonal map
        gram = rounding.T.T @ rounding.T
        np.testing.assert_allclose(gram / gram[0, 0], np.eye(2), atol=1e-9)

    def test_anisotropic(self):
        A = WeightedPointSet.from_rows(np.diag([1.0, 1000.0]), p=1)
        rounding = john_round(A)
        assert rounding.distortion <= np.sqrt(6) * 1.1
        assert certify_rounding(A, rounding.T) <= np.sqrt(6) * 1.1

    @pytest.mark.parametrize("p", [1.0, 1.5, 3.0, 4.0])
    def test_sandwich_on_random_instances(self, p):
        rng = np.random.default_rng(int(p * 10))
        for d in (2, 3, 4):
            A = WeightedPointSet.from_rows(rng.standard_normal((200, d)) * rng.uniform(0.1, 10, d), p=p)
            rounding = john_round(A, seed=1)
            assert rounding.certified
            assert rounding.distortion <= np.sqrt(d * (d + 1)) * 1.2
            # on the certification sample itself the scaling is exact
            np.testing.assert_allclose(certify_rounding(A, rounding.T, seed=1), rounding.distortion, rtol=1e-9)
            values = _norms(A, rounding.T, random_directions(rng, 1000, d))
            assert values.max() <= 1.1
            assert values.min() >= 1 / (rounding.distortion * 1.2)

    def test_rank_deficient_flagged(self):
        rng = np.random.default_rng(1)
        base = rng.standard_normal((40, 2))
        A = WeightedPointSet.from_rows(np.column_stack([base, base[:, 0] + base[:, 1]]), p=1)
        rounding = john_round(A)
        assert rounding.rank_deficient
        assert rounding.rank == 2
        assert rounding.T.shape == (3, 2)

    def test_zero_matrix(self):
        with pytest.raises(DegenerateInputError):
            john_round(WeightedPointSet.from_rows(np.zeros((3, 2))))

    def test_lower_bound_against_row_norms(self):
        rng = np.random.default_rng(2)
        for p in (1.0, 3.0):
            d = 3
            A = WeightedPointSet.from_rows(rng.standard_normal((300, d)), p=p)
            rounding = john_round(A, seed=3)
            rounded = A.scaled_rows() @ rounding.T
            row_mass = np.sum(np.linalg.norm(rounded, axis=1) ** p)
            c = beta_dp(d, p) / rounding.distortion**p
            values = _norms(A, rounding.T, random_directions(rng, 500, d)) ** p
            assert values.min() >= 0.9 * c * row_mass


class TestCertifyRounding:
    def test_p2_path(self):
        rng = np.random.default_rng(3)
        A = WeightedPointSet.from_rows(rng.standard_normal((30, 2)), p=2)
        assert abs(certify_rounding(A, john_round(A).T) - 1.0) <= 1e-9

    def test_identity_on_cross_polytope(self):
        A = WeightedPointSet.from_rows(np.eye(2), p=1)
        np.testing.assert_allclose(certify_rounding(A, np.eye(2)), np.sqrt(2), rtol=1e-9)

    def test_scale_invariant(self):
        rng = np.random.default_rng(4)
        A = WeightedPointSet.from_rows(rng.standard_normal((30, 3)), p=1)
        T = rng.standard_normal((3, 3))
        np.testing.assert_allclose(certify_rounding(A, 5 * T), certify_rounding(A, T), rtol=1e-12)


class TestWellConditionedBasis:
    def test_orthonormal_columns(self):
        rng = np.random.default_rng(5)
        A_rows, _ = np.linalg.qr(rng.standard_normal((20, 3)))
        basis = well_conditioned_basis(WeightedPointSet.from_rows(A_rows, p=2))
        np.testing.assert_allclose(basis.U, A_rows, atol=1e-12)
        np.testing.assert_allclose(basis.T_map, np.eye(3), atol=1e-12)
        assert basis.beta == 1.0
        np.testing.assert_allclose(basis.alpha, np.sqrt(3), rtol=1e-12)

    @pytest.mark.parametrize("p", [1.0, 2.0, 3.0])
    def test_factorization_and_certificates(self, p):
        rng = np.random.default_rng(6)
        A = WeightedPointSet.from_rows(rng.standard_normal((100, 3)), rng.uniform(0.5, 1.5, 100), p=p)
        basis = well_conditioned_basis(A)
        Aw = A.scaled_rows()
        np.testing.assert_allclose(basis.U @ basis.T_map, Aw, atol=1e-8 * np.linalg.norm(Aw))
        assert np.sum(np.abs(basis.U) ** p) ** (1 / p) <= basis.alpha * (1 + 1e-6)
        q = np.inf if p == 1 else p / (p - 1)
        Z = rng.standard_normal((1000, 3))
        lhs = np.linalg.norm(Z, ord=q, axis=1)
        rhs = np.sum(np.abs(Z @ basis.U.T) ** p, axis=1) ** (1 / p)
        assert np.all(lhs <= basis.beta * rhs * (1 + 1e-6))

    def test_random_p1_alpha_reported(self):
        rng = np.random.default_rng(7)
        basis = well_conditioned_basis(WeightedPointSet.from_rows(rng.standard_normal((100, 3)), p=1))
        assert np.isfinite(basis.alpha) and basis.alpha > 0

    def test_rank_deficient_p2(self):
        rng = np.random.default_rng(8)
        base = rng.standard_normal((30, 1))
        A = WeightedPointSet.from_rows(np.hstack([base, 2 * base]), p=2)
        basis = well_conditioned_basis(A)
        assert basis.rank == 1
        np.testing.assert_allclose(basis.U @ basis.T_map, A.points, atol=1e-10)


class TestSensitivity:
    def test_first_row(self):
        assert sensitivity_upper(None, [1.0, 2.0], p=1) == 1.0

    def test_zero_row(self):
        basis = well_conditioned_basis(WeightedPointSet.from_rows(np.eye(2), p=2))
        assert sensitivity_upper(basis, [0.0, 0.0], p=2) == 0.0

    def test_duplicate_orthonormal_row(self):
        basis = well_conditioned_basis(WeightedPointSet.from_rows(np.eye(3), p=2))
        a = np.array([0.0, 1.0, 0.0])
        value = sensitivity_upper(basis, a, p=2)
        exact = online_sensitivity_sup(WeightedPointSet.from_rows(np.eye(3), p=2), a)
        assert value <= 1.0
        np.testing.assert_allclose(exact, 1.0, atol=1e-6)
        np.testing.assert_allclose(value, 1.0, atol=1e-9)

    def test_new_direction_has_sensitivity_one(self):
        basis = well_conditioned_basis(WeightedPointSet.from_rows([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], p=2))
        assert sensitivity_upper(basis, [0.0, 0.0, 1.0], p=2) == 1.0

    def test_leverage_scores_for_p2(self):
        rng = np.random.default_rng(9)
        A = rng.standard_normal((50, 2))
        basis = well_conditioned_basis(WeightedPointSet.from_rows(A, p=2))
        a = rng.standard_normal(2) * 0.3
        exact = online_sensitivity_sup(WeightedPointSet.from_rows(A, p=2), a, directions=20_000)
        np.testing.assert_allclose(sensitivity_upper(basis, a, p=2), exact, rtol=1e-4)

    @pytest.mark.parametrize("p", [1.0, 3.0])
    def test_within_polynomial_factor(self, p):
        rng = np.random.default_rng(10)
        d = 2
        prior = WeightedPointSet.from_rows(rng.standard_normal((60, d)), p=p)
        basis = well_conditioned_basis(prior)
        ratios = []
        for a in rng.standard_normal((20, d)) * 0.2:
            exact = online_sensitivity_sup(prior, a)
            ratios.append(sensitivity_upper(basis, a, p) / exact)
        assert min(ratios) >= 1 / (basis.beta**p * d**p)
        assert max(ratios) <= (basis.alpha * d) ** p
