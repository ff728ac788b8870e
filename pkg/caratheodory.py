# caratheodory.py

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from core_model import InputError, NORMALIZED_TOL

logger = logging.getLogger(__name__)

PIVOT_TOLERANCES = (1e-10, 1e-8, 1e-6)
CLAMP_TOL = 1e-12


class SingularPivotError(ArithmeticError):
    pass


class WeightedSubset(NamedTuple):
    indices: np.ndarray
    weights: np.ndarray
    probability: float


@dataclass(frozen=True)
class SubsetDistribution:
    """
    A distribution over small subsets of s weighted points. Every subset has the same
    weighted barycenter as the full set, and the expected weight of each point equals
    its original weight.
    """

    subsets: tuple[WeightedSubset, ...]
    ambient_dim: int
    barycenter: np.ndarray
    size: int
    degenerate: bool = False
    tolerance: float = field(default=PIVOT_TOLERANCES[0])

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([s.probability for s in self.subsets])

    def marginals(self) -> np.ndarray:
        """Expected weight of each of the s input points."""
        out = np.zeros(self.size)
        for subset in self.subsets:
            np.add.at(out, subset.indices, subset.probability * subset.weights)
        return out

    def expectation(self, values) -> np.ndarray | float:
        """E over a sampled subset of sum_j w_j * values[T_j]; values may carry trailing axes."""
        values = np.asarray(values, dtype=np.float64)
        total = 0.0
        for subset in self.subsets:
            total = total + subset.probability * np.tensordot(subset.weights, values[subset.indices], axes=1)
        return total


def _null_direction(lifted: np.ndarray) -> np.ndarray:
    # last right singular vector of a wide matrix lies in its null space
    _, _, vt = np.linalg.svd(lifted, full_matrices=True)
    direction = vt[-1]
    pivot = np.flatnonzero(np.abs(direction) > 0)[0]
    return direction if direction[pivot] > 0 else -direction


def _basic_solution(lifted: np.ndarray, start: np.ndarray, tol: float) -> np.ndarray:
    """
    Walks from a feasible weight vector to a vertex of {w >= 0 : lifted @ w = lifted @ start}
    by moving along null-space directions until at most rank-many weights stay positive.
    """
    w = start.copy()
    support = np.flatnonzero(w > 0)
    dim = lifted.shape[0]
    while len(support) > dim:
        n = _null_direction(lifted[:, support])
        positive = n > tol
        if not positive.any():
            raise SingularPivotError(f"no usable pivot among {len(support)} columns at tol={tol}")
        ratios = np.full(len(support), np.inf)
        ratios[positive] = w[support][positive] / n[positive]
        # Bland's rule: lowest index among the minimizing ratios leaves the basis
        leaving = int(np.argmin(ratios))
        w[support] -= ratios[leaving] * n
        w[support[leaving]] = 0.0
        w[np.abs(w) <= tol] = 0.0
        if np.any(w < 0):
            raise SingularPivotError(f"pivot step produced negative weight {w.min():.3e}")
        support = np.flatnonzero(w > 0)
    return w


def _clean(weights: np.ndarray) -> np.ndarray:
    weights = np.where(weights < CLAMP_TOL, 0.0, weights)
    return weights / weights.sum()


def _extract(points: np.ndarray, u: np.ndarray, tol: float) -> list[WeightedSubset]:
    dim = points.shape[1] + 1
    lifted = np.vstack([points.T, np.ones(len(points))])
    residual = u.copy()
    subsets = []
    while np.count_nonzero(residual) > dim:
        mass = residual.sum()
        vertex = _basic_solution(lifted, residual / mass, tol)
        members = np.flatnonzero(vertex > 0)
        step = np.min(residual[members] / vertex[members])
        leaving = members[int(np.argmin(residual[members] / vertex[members]))]
        residual = residual - step * vertex
        residual[leaving] = 0.0
        residual[residual <= tol * mass] = 0.0
        subsets.append(WeightedSubset(members, _clean(vertex[members]), float(step)))
    members = np.flatnonzero(residual > 0)
    if len(members):
        mass = residual[members].sum()
        subsets.append(WeightedSubset(members, _clean(residual[members] / mass), float(mass)))
    return subsets


def _trivial(points: np.ndarray, u: np.ndarray, barycenter: np.ndarray, degenerate: bool) -> SubsetDistribution:
    members = np.flatnonzero(u > 0)
    return SubsetDistribution(
        subsets=(WeightedSubset(members, u[members] / u[members].sum(), 1.0),),
        ambient_dim=points.shape[1],
        barycenter=barycenter,
        size=len(points),
        degenerate=degenerate,
    )


def decompose(points, u) -> SubsetDistribution:
    """
    Splits a weighted point set into a distribution over subsets of at most D+1 points,
    each reweighted to reproduce the barycenter of the whole set exactly.

    Args:
        points: s points in R^D, one per row.
        u: Weights on the simplex, one per point.

    Returns:
        SubsetDistribution: At most s - D subsets whose probabilities sum to 1.
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    if len(points) == 0:
        raise InputError("decompose needs at least one point")
    if len(u) != len(points):
        raise InputError(f"{len(u)} weights given for {len(points)} points")
    if np.any(u < 0) or abs(u.sum() - 1.0) > NORMALIZED_TOL:
        raise InputError(f"weights must lie on the simplex, got sum {u.sum()}")

    barycenter = u @ points
    if np.count_nonzero(u) <= points.shape[1] + 1:
        return _trivial(points, u, barycenter, degenerate=False)

    try:
        for attempt in Retrying(
            stop=stop_after_attempt(len(PIVOT_TOLERANCES)),
            retry=retry_if_exception_type(SingularPivotError),
            reraise=True,
        ):
            with attempt:
                tol = PIVOT_TOLERANCES[attempt.retry_state.attempt_number - 1]
                if tol != PIVOT_TOLERANCES[0]:
                    logger.warning("relaxing pivot tolerance to %g for %d points in R^%d", tol, *points.shape)
                subsets = _extract(points, u, tol)
    except SingularPivotError as exc:
        logger.warning("falling back to the trivial decomposition: %s", exc)
        return _trivial(points, u, barycenter, degenerate=True)

    total = sum(s.probability for s in subsets)
    subsets = tuple(s._replace(probability=s.probability / total) for s in subsets)
    return SubsetDistribution(
        subsets=subsets,
        ambient_dim=points.shape[1],
        barycenter=barycenter,
        size=len(points),
        tolerance=tol,
    )


def sample(dist: SubsetDistribution, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if len(dist.subsets) == 1:
        chosen = dist.subsets[0]
    else:
        probabilities = dist.probabilities
        chosen = dist.subsets[rng.choice(len(dist.subsets), p=probabilities / probabilities.sum())]
    return chosen.indices, chosen.weights
