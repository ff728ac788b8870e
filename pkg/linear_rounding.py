# linear_rounding.py

"""
Rounding of the norm body Z(A) = {x : ||Ax||_p <= 1}, well-conditioned bases and
online sensitivity estimates.

Weights are folded into the rows first (w_i^{1/p} A_i), so everything here speaks
about ||A x||_p^p = sum_i w_i |<A_i, x>|^p.
"""

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from core_model import DegenerateInputError, InputError, WeightedPointSet
from sphere_geometry import random_directions

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
ROWSPACE_TOL = 1e-9
CERTIFY_DIRECTIONS = 2000
CERTIFY_SLACK = 1.1
BETA_MARGIN = 1.1
MAX_CUTS_PER_DIM = 200


@dataclass(frozen=True)
class RoundingTransform:
    """
    x = T u maps r-dimensional coordinates u onto the row space of A so that
    1/distortion <= ||A T u||_p <= 1 for unit u.
    """

    T: np.ndarray
    left_inverse: np.ndarray
    distortion: float
    certified: bool
    rank: int
    rank_deficient: bool
    cuts: int = 0

    def to_rounded(self, points: np.ndarray) -> np.ndarray:
        return points @ self.T

    def from_rounded(self, points: np.ndarray) -> np.ndarray:
        """Maps rows B'' in rounded coordinates back so that <B, x> = <B'', T^+ x>."""
        return points @ self.left_inverse


@dataclass(frozen=True)
class ConditionedBasis:
    U: np.ndarray
    T_map: np.ndarray
    alpha: float
    beta: float
    p: float

    @property
    def rank(self) -> int:
        return self.U.shape[1]

    @cached_property
    def right_inverse(self) -> np.ndarray:
        return np.linalg.pinv(self.T_map)

    def rowspace_residual(self, a) -> float:
        a = np.asarray(a, dtype=np.float64)
        return float(np.linalg.norm(a - (a @ self.right_inverse) @ self.T_map))


def _lp_norms(M: np.ndarray, p: float) -> np.ndarray:
    return np.sum(np.abs(M) ** p, axis=-1) ** (1.0 / p)


def _sample_units(r: int, directions: int, seed: int) -> np.ndarray:
    if r == 1:
        return np.array([[1.0], [-1.0]])
    if r == 2:
        theta = 2 * np.pi * np.arange(directions) / directions
        return np.column_stack([np.cos(theta), np.sin(theta)])
    eye = np.eye(r)
    return np.vstack([eye, -eye, random_directions(np.random.default_rng(seed), directions, r)])


def _norm_extremes(Aw: np.ndarray, T: np.ndarray, p: float, directions: int, seed: int) -> tuple[float, float]:
    units = _sample_units(T.shape[1], directions, seed)
    values = _lp_norms(units @ (Aw @ T).T, p)
    return float(values.min()), float(values.max())


def certify_rounding(A: WeightedPointSet, T, directions: int = CERTIFY_DIRECTIONS, seed: int = 0) -> float:
    """
    Ratio of the largest to the smallest ||A T u||_p over sampled unit u.

    Args:
        A (WeightedPointSet): The weighted rows.
        T: A d x r map.
        directions (int): Sample size. For r = 2 an equally spaced angle grid is used.
        seed (int): Seed for r >= 3.

    Returns:
        float: The measured distortion, infinite when some sampled u is annihilated.
    """
    T = np.atleast_2d(np.asarray(T, dtype=np.float64))
    if T.shape[0] != A.dim:
        raise InputError(f"T has {T.shape[0]} rows, A has dimension {A.dim}")
    low, high = _norm_extremes(A.scaled_rows(), T, A.p, directions, seed)
    return high / low if low > 0 else float("inf")


def _reduce(Aw: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Orthonormal U_r with Aw M = U_r, where M = V_r S_r^{-1}."""
    _, S, Vt = np.linalg.svd(Aw, full_matrices=False)
    if not len(S) or S[0] == 0:
        raise DegenerateInputError("cannot round a matrix without nonzero rows")
    rank = int(np.sum(S > RANK_TOL * S[0]))
    M = Vt[:rank].T / S[:rank]
    return Aw @ M, M, rank


def _symmetric_cut(Q: np.ndarray, g: np.ndarray, r: int) -> np.ndarray:
    # smallest ellipsoid containing {u in E : |g.u| <= 1}, with depth alpha < 1/sqrt(r)
    Qg = Q @ g
    gQg = float(g @ Qg)
    alpha2 = 1.0 / gQg
    a2 = r * alpha2
    b2 = r * (1 - alpha2) / (r - 1)
    return b2 * (Q - (1 - a2 / b2) * np.outer(Qg, Qg) / gQg)


def _ellipsoid_round(U: np.ndarray, p: float, max_cuts: int) -> tuple[np.ndarray, int, bool]:
    """
    Symmetric cutting-plane rounding of Z(U) for orthonormal U. Keeps Z inside
    E = {u : u^T Q^{-1} u <= 1} and stops once every semi-axis endpoint of E,
    shrunk by sqrt(r+1), lies in Z, which gives E / sqrt(r(r+1)) inside Z.
    """
    n, r = U.shape
    R = n ** max(0.5 - 1.0 / p, 0.0)
    Q = R**2 * np.eye(r)
    shrink = np.sqrt(r + 1)
    for cut in range(max_cuts):
        eigenvalues, eigenvectors = np.linalg.eigh(Q)
        axes = eigenvectors * np.sqrt(np.maximum(eigenvalues, 0.0))
        values = _lp_norms((U @ axes).T, p)
        worst = int(np.argmax(values))
        if values[worst] <= shrink:
            return Q, cut, True
        v = U @ axes[:, worst]
        g = U.T @ (np.sign(v) * np.abs(v) ** (p - 1)) / values[worst] ** (p - 1)
        Q = _symmetric_cut(Q, g, r)
        Q = (Q + Q.T) / 2
    return Q, max_cuts, False


def john_round(A: WeightedPointSet, directions: int = CERTIFY_DIRECTIONS, seed: int = 0) -> RoundingTransform:
    """
    Approximate John-ellipsoid normalization of {x : ||Ax||_p <= 1}.

    Rank-deficient inputs are rounded inside their row space and flagged. The transform
    is scaled so the sampled maximum of ||A T u||_p over unit u is exactly 1.
    """
    Aw = A.scaled_rows()
    U, M, rank = _reduce(Aw)
    deficient = rank < A.dim
    if deficient:
        logger.warning("rounding a rank-%d matrix in dimension %d inside its row space", rank, A.dim)

    cuts, converged = 0, True
    if A.p == 2:
        T = M
    elif rank == 1:
        T = M / _lp_norms(U.T, A.p)[0]
    else:
        Q, cuts, converged = _ellipsoid_round(U, A.p, MAX_CUTS_PER_DIM * rank**2)
        T = M @ np.linalg.cholesky(Q)
    low, high = _norm_extremes(Aw, T, A.p, directions, seed)
    T = T / high
    distortion = high / low
    target = np.sqrt(rank * (rank + 1)) * CERTIFY_SLACK
    certified = bool(converged and distortion <= target)
    if not certified:
        logger.warning(
            "rounding not certified: distortion %.4g (target %.4g) after %d cuts", distortion, target, cuts
        )
    logger.debug("rounded rank %d, p=%g, distortion %.4g after %d cuts", rank, A.p, distortion, cuts)
    return RoundingTransform(
        T=T,
        left_inverse=np.linalg.pinv(T),
        distortion=float(distortion),
        certified=certified,
        rank=rank,
        rank_deficient=deficient,
        cuts=cuts,
    )


def well_conditioned_basis(A: WeightedPointSet, p: float | None = None, directions: int = CERTIFY_DIRECTIONS, seed: int = 0) -> ConditionedBasis:
    """
    Decomposes the weighted rows as A = U T_map with certificates alpha >= ||U||_p
    (entrywise) and ||z||_q <= beta ||U z||_p.

    p = 2 uses an orthonormal basis (alpha = ||U||_F, beta = 1). Other p use the
    rounding transform, rescaled so that the smallest sampled ||U z||_p is 1.
    """
    p = A.p if p is None else p
    if p != A.p:
        A = WeightedPointSet.from_rows(A.points, A.weights, p=p)
    Aw = A.scaled_rows()
    if p == 2:
        U, M, rank = _reduce(Aw)
        if rank == A.dim:
            U, R = np.linalg.qr(Aw)
            signs = np.where(np.diag(R) < 0, -1.0, 1.0)
            U, T_map = U * signs, R * signs[:, None]
        else:
            T_map = np.linalg.pinv(M)
        return ConditionedBasis(U=U, T_map=T_map, alpha=float(np.linalg.norm(U)), beta=1.0, p=p)

    rounding = john_round(A, directions=directions, seed=seed)
    scale = rounding.distortion
    U = Aw @ rounding.T * scale
    T_map = rounding.left_inverse / scale
    r = rounding.rank
    q_gap = max(0.0, (1.0 - 1.0 / p) - 0.5)
    low, _ = _norm_extremes(U, np.eye(r), p, directions, seed + 1)
    beta = r**q_gap / low * BETA_MARGIN
    alpha = float(np.sum(np.abs(U) ** p) ** (1.0 / p))
    return ConditionedBasis(U=U, T_map=T_map, alpha=alpha, beta=float(beta), p=p)


def sensitivity_upper(basis: ConditionedBasis | None, a, p: float) -> float:
    """
    Upper estimate of the online sensitivity of row a against the rows the basis was
    built from: 1 when a leaves their row space, else min(1, ||a T_map^+||_2^p).
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    norm = float(np.linalg.norm(a))
    if norm == 0:
        return 0.0
    if basis is None or basis.rowspace_residual(a) > ROWSPACE_TOL * norm:
        return 1.0
    return float(min(1.0, np.linalg.norm(a @ basis.right_inverse) ** p))


def online_sensitivity_sup(prior: WeightedPointSet, a, p: float | None = None, directions: int = 4096, seed: int = 0) -> float:
    """Brute-force min(1, sup_x |<a,x>|^p / ||A_prior x||_p^p) over a dense direction set."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    p = prior.p if p is None else p
    if not np.any(a):
        return 0.0
    if len(prior) == 0:
        return 1.0
    Aw = prior.points * (prior.weights ** (1.0 / p))[:, None]
    _, S, Vt = np.linalg.svd(Aw, full_matrices=False)
    rank = int(np.sum(S > RANK_TOL * S[0])) if len(S) and S[0] > 0 else 0
    basis = Vt[:rank]
    if np.linalg.norm(a - (a @ basis.T) @ basis) > ROWSPACE_TOL * np.linalg.norm(a):
        return 1.0
    # restricting x to the row space loses nothing: both sides ignore its complement
    X = _sample_units(rank, directions, seed) @ basis
    numerator = np.abs(X @ a) ** p
    denominator = np.sum(np.abs(X @ Aw.T) ** p, axis=1)
    ratio = numerator[denominator > 0] / denominator[denominator > 0]
    return float(min(1.0, ratio.max()))
