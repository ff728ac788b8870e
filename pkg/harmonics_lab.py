# harmonics_lab.py

"""
Numerical side of the spherical-harmonic machinery: normalized Legendre (Gegenbauer)
polynomials, harmonic multiplicities, the Funk-Hecke eigenvalues lambda_k of |t|^p,
and the packing constructions used to measure how far apart two point sets can be
told by their lp norm profiles.
"""

import logging
from math import comb

import numpy as np
from pydantic import BaseModel
from scipy.optimize import minimize, minimize_scalar
from scipy.special import gamma, rgamma, roots_jacobi

from core_model import InputError, WeightedPointSet
from sphere_geometry import build_net, random_directions

logger = logging.getLogger(__name__)

QUAD_TOL = 1e-12
MAX_QUAD_ORDER = 1 << 13
EVAL_CHUNK = 2048


class LambdaTable(BaseModel):
    d: int
    p: float
    values: list[float]
    quad_order: int
    converged: bool = True

    def __getitem__(self, k: int) -> float:
        return self.values[k]

    def __len__(self) -> int:
        return len(self.values)


class PackingFamily(BaseModel):
    model_config = {"arbitrary_types_allowed": True}

    points: np.ndarray
    subsets: list[list[int]]
    eta: float
    complete: bool = True


def legendre_P(k: int, d: int, t):
    """P_{k,d}(t) = C_k^{d/2-1}(t) / C_k^{d/2-1}(1); Chebyshev T_k for d = 2."""
    if k < 0 or d < 2:
        raise InputError(f"need k >= 0 and d >= 2, got k={k}, d={d}")
    t = np.asarray(t, dtype=np.float64)
    previous, current = np.ones_like(t), t.copy()
    if k == 0:
        return previous if previous.ndim else float(previous)
    for j in range(1, k):
        previous, current = current, ((2 * j + d - 2) * t * current - j * previous) / (j + d - 2)
    return current if current.ndim else float(current)


def M_count(d: int, k: int) -> int:
    """Dimension of the degree-k spherical harmonics on S^{d-1}."""
    if k < 0 or d < 2:
        raise InputError(f"need k >= 0 and d >= 2, got k={k}, d={d}")
    if k == 0:
        return 1
    second = comb(k + d - 3, d - 2) if k + d - 3 >= 0 else 0
    return comb(k + d - 2, d - 2) + second


def _sphere_constant(d: int) -> float:
    return float(gamma(d / 2) / (np.sqrt(np.pi) * gamma((d - 1) / 2)))


def _jacobi_integral(d: int, p: float, k: int, order: int) -> float:
    # int_0^1 t^p (1-t^2)^a P_{k,d}(t) dt with t = (1+x)/2, weight (1-x)^a (1+x)^p
    a = (d - 3) / 2
    x, w = roots_jacobi(order, a, p)
    t = (1 + x) / 2
    return float(2.0 ** (-p - a - 1) * np.sum(w * (1 + t) ** a * legendre_P(k, d, t)))


def lambda_k(d: int, p: float, k: int, quad_order: int | None = None) -> tuple[float, int, bool]:
    """
    Funk-Hecke eigenvalue of f(t) = |t|^p on S^{d-1}:
    Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2)) * int_{-1}^{1} f(t) (1-t^2)^{(d-3)/2} P_{k,d}(t) dt.

    The even integrand is folded onto [0, 1] and integrated by Gauss-Jacobi rules that
    absorb both t^p and the endpoint weight; the order doubles until two successive
    values agree to QUAD_TOL.

    Returns:
        tuple[float, int, bool]: The value, the final order, and whether it converged.
    """
    if d < 2 or p < 0 or k < 0:
        raise InputError(f"need d >= 2, p >= 0, k >= 0, got d={d}, p={p}, k={k}")
    if k % 2:
        return 0.0, 0, True
    order = quad_order or max(16, k // 2 + int(np.ceil(p)) + 8)
    value = _jacobi_integral(d, p, k, order)
    while order < MAX_QUAD_ORDER:
        refined = _jacobi_integral(d, p, k, 2 * order)
        order *= 2
        if abs(refined - value) <= QUAD_TOL * max(1.0, abs(refined)):
            return 2 * _sphere_constant(d) * refined, order, True
        value = refined
    logger.warning("lambda_k(d=%d, p=%g, k=%d) did not settle by order %d", d, p, k, order)
    return 2 * _sphere_constant(d) * value, order, False


def lambda_k_circle(p: float, k: int) -> float:
    """Closed form for d = 2: (1/2pi) int |cos t|^p cos(kt) dt."""
    if k % 2:
        return 0.0
    return float(gamma(p + 1) * rgamma((p + k) / 2 + 1) * rgamma((p - k) / 2 + 1) / 2.0**p)


def lambda_table(d: int, p: float, K: int) -> LambdaTable:
    if d == 2:
        return LambdaTable(d=d, p=p, values=[lambda_k_circle(p, k) for k in range(K + 1)], quad_order=0)
    values, orders, settled = [], [0], True
    for k in range(K + 1):
        value, order, converged = lambda_k(d, p, k)
        values.append(value)
        orders.append(order)
        settled &= converged
    return LambdaTable(d=d, p=p, values=values, quad_order=max(orders), converged=settled)


def lambda_decay_check(d: int, p: float, k_max: int) -> float | None:
    """
    Log-log slope of |lambda_k| over even k in [k_max/2, k_max]. None for even integer p,
    where every lambda_k with k > p vanishes.
    """
    if float(p).is_integer() and int(p) % 2 == 0:
        return None
    ks = np.array([k for k in range(max(2, k_max // 2), k_max + 1) if k % 2 == 0])
    values = np.abs([lambda_k(d, p, int(k))[0] for k in ks])
    slope, _ = np.polyfit(np.log(ks), np.log(values), 1)
    return float(slope)


def beta_dp(d: int, p: float) -> float:
    """int |<u, x>|^p d sigma(x) over the normalized sphere measure, i.e. lambda_0."""
    return lambda_k(d, p, 0)[0]


def beta_dp_monte_carlo(d: int, p: float, samples: int, seed: int) -> float:
    x = random_directions(np.random.default_rng(seed), samples, d)
    return float(np.mean(np.abs(x[:, 0]) ** p))


def poisson_partial_sum(d: int, r: float, t, K: int):
    t = np.asarray(t, dtype=np.float64)
    return sum(M_count(d, k) * r**k * legendre_P(k, d, t) for k in range(K + 1))


def poisson_kernel(d: int, r: float, t):
    t = np.asarray(t, dtype=np.float64)
    return (1 - r**2) / (1 + r**2 - 2 * r * t) ** (d / 2)


def lower_bound_exponent(d: int, p: float) -> float:
    return -(d + 2 * p) / (2 * (d - 1))


def affine_lower_bound_exponent(d: int, p: float) -> float:
    return -(d + 2 * p + 1) / (2 * d)


def packing_eta(d: int, N: int, c1: float) -> float:
    return c1 * N ** (-1.0 / (d - 1))


def build_packing(d: int, N: int, seed: int, c1: float = 8.0) -> PackingFamily:
    """
    eta-separated points p_1..p_n, n <= N/2 and even, on the cap {y : <y, x> >= eta/2}
    around x = e_d, so that |p_i - p_j| >= eta and |p_i + p_j| >= eta.

    d = 2 lays the points at the exact angles pi (j + 1/2) / n; other d run the greedy
    net over random cap directions. The two halves are stored as subsets 0 and 1:
    alternating points for d = 2, a seeded random split otherwise.
    """
    if d < 2 or N < 4:
        raise InputError(f"need d >= 2 and N >= 4, got d={d}, N={N}")
    eta = packing_eta(d, N, c1)
    if not 0 < eta < 1:
        raise InputError(f"separation {eta} out of range; increase N or lower c1")
    rng = np.random.default_rng(seed)
    if d == 2:
        n = 2 * int(np.pi / (2 * 2 * np.arcsin(eta / 2)))
        theta = np.pi * (np.arange(n) + 0.5) / n
        candidates = np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        count = int(min(1 << 18, np.ceil(8 * (2 / eta) ** (d - 1))))
        candidates = random_directions(rng, count, d)
        candidates = candidates[candidates[:, -1] >= eta / 2]
    net = build_net(d, eta * (1 - 1e-9), seed, candidates=candidates, validate_range=False)
    points = net.centers[: min(len(net), N // 2) // 2 * 2]
    n = len(points)
    if d == 2:
        halves = [list(range(0, n, 2)), list(range(1, n, 2))]
    else:
        order = rng.permutation(n)
        halves = [sorted(order[: n // 2].tolist()), sorted(order[n // 2 :].tolist())]
    return PackingFamily(points=points, subsets=halves, eta=eta)


def is_intersecting_family(subsets, n: int, alpha: float = 0.5, beta: float = 0.25) -> bool:
    sets = [set(s) for s in subsets]
    if any(len(s) != int(alpha * n) or not s <= set(range(n)) for s in sets):
        return False
    return all(len(a & b) <= beta * n for i, a in enumerate(sets) for b in sets[i + 1 :])


def build_subset_family(
    n: int, alpha: float = 0.5, beta: float = 0.25, count: int = 8, seed: int = 0, max_tries: int = 10_000
) -> tuple[list[list[int]], bool]:
    """
    Random alpha*n-subsets of range(n) with pairwise intersections at most beta*n,
    by rejection sampling.

    Returns:
        tuple[list[list[int]], bool]: The subsets found and whether `count` was reached.
    """
    if not 0 < alpha <= 1 or not 0 <= beta <= alpha:
        raise InputError(f"need 0 < beta <= alpha <= 1, got alpha={alpha}, beta={beta}")
    rng = np.random.default_rng(seed)
    size = int(alpha * n)
    family: list[np.ndarray] = []
    members = np.zeros((0, n), dtype=bool)
    for _ in range(max_tries):
        if len(family) == count:
            break
        candidate = np.zeros(n, dtype=bool)
        candidate[rng.choice(n, size=size, replace=False)] = True
        if len(family) and (members & candidate).sum(axis=1).max() > beta * n:
            continue
        family.append(np.flatnonzero(candidate))
        members = np.vstack([members, candidate])
    complete = len(family) == count
    if not complete:
        logger.warning("subset family stopped at %d of %d sets after %d tries", len(family), count, max_tries)
    return [f.tolist() for f in family], complete


def symmetrize(points: np.ndarray) -> np.ndarray:
    return np.vstack([points, -points])


def _profile_gap(A: np.ndarray, wa: np.ndarray, B: np.ndarray, wb: np.ndarray, p: float, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    for start in range(0, len(X), EVAL_CHUNK):
        block = X[start : start + EVAL_CHUNK]
        out[start : start + EVAL_CHUNK] = np.abs(block @ A.T) ** p @ wa - np.abs(block @ B.T) ** p @ wb
    return np.abs(out)


def _sup_gap(A, wa, B, wb, p: float, direction_budget: int, seed: int) -> float:
    d = A.shape[1]

    def gap(x):
        x = np.atleast_2d(x)
        return _profile_gap(A, wa, B, wb, p, x / np.linalg.norm(x, axis=1, keepdims=True))

    if d == 2:
        # both profiles are even in x, so half a turn suffices
        step = np.pi / direction_budget
        theta = step * np.arange(direction_budget)
        values = gap(np.column_stack([np.cos(theta), np.sin(theta)]))
        best = theta[int(np.argmax(values))]
        refined = minimize_scalar(
            lambda t: -gap([np.cos(t), np.sin(t)])[0],
            bounds=(best - step, best + step),
            method="bounded",
            options={"xatol": 1e-12},
        )
        return float(max(values.max(), -refined.fun))

    rng = np.random.default_rng(seed)
    X = np.vstack([np.eye(d), random_directions(rng, direction_budget, d)])
    values = gap(X)
    start = X[int(np.argmax(values))]
    refined = minimize(lambda x: -gap(x)[0], start, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    return float(max(values.max(), -refined.fun))


def separation_delta(A, B, p: float, direction_budget: int = 4096, seed: int = 0) -> float:
    """
    sup_x (1/n) | ||Ax||_p^p - ||Bx||_p^p | over unit x, with n = |A|, estimated by a
    dense direction set followed by local ascent from its best point. The value is a
    lower bound on the true sup.
    """
    A = A.points if isinstance(A, WeightedPointSet) else np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = B.points if isinstance(B, WeightedPointSet) else np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise InputError(f"point sets live in different dimensions: {A.shape[1]} vs {B.shape[1]}")
    n = len(A)
    return _sup_gap(A, np.full(len(A), 1 / n), B, np.full(len(B), 1 / n), p, direction_budget, seed)


def affine_separation_delta(
    A, B, p: float, alpha: float, beta: float, direction_budget: int = 4096, seed: int = 0
) -> float:
    """
    separation_delta for points in the shell alpha <= |y| <= beta, which must satisfy
    alpha < beta < ((1 + sqrt 3) / 2)^(1/p) alpha. Norms act as per-point weights
    |y|^p / n on the normalized directions.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if not 0 < alpha < beta < ((1 + np.sqrt(3)) / 2) ** (1 / p) * alpha:
        raise InputError(f"shell [{alpha}, {beta}] violates alpha < beta < ((1+sqrt3)/2)^(1/p) alpha")
    norms_a, norms_b = np.linalg.norm(A, axis=1), np.linalg.norm(B, axis=1)
    tol = 1e-12 * beta
    if norms_a.min() < alpha - tol or norms_a.max() > beta + tol or norms_b.min() < alpha - tol or norms_b.max() > beta + tol:
        raise InputError(f"points fall outside the shell [{alpha}, {beta}]")
    n = len(A)
    return _sup_gap(
        A / norms_a[:, None], norms_a**p / n, B / norms_b[:, None], norms_b**p / n, p, direction_budget, seed
    )


def affine_packing(d: int, N: int, p: float, seed: int, c1: float = 8.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Packing on S^d restricted to the cap y_{d+1} >= (3/4)^(1/p), with the last coordinate
    rescaled to 1. Returns the two symmetrized halves, in R^{d+1}.
    """
    packing = build_packing(d + 1, N, seed, c1)
    keep = packing.points[:, -1] >= (3 / 4) ** (1 / p)
    lifted = packing.points / packing.points[:, -1:]
    halves = []
    for subset in packing.subsets:
        chosen = np.array([i for i in subset if keep[i]], dtype=np.int64)
        halves.append(symmetrize(lifted[chosen]))
    size = min(len(halves[0]), len(halves[1]))
    return halves[0][:size], halves[1][:size]
