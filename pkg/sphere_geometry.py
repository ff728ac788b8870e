# sphere_geometry.py

"""
Nets, caps and region partitions of the unit sphere S^{d-1}.

Regions are the Voronoi cells of an eta-separated net with ties going to the lowest
center index. group_partition slices each region into consecutive s-point groups.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import betainc, gamma

from core_model import DegenerateInputError, InputError, WeightedPointSet

logger = logging.getLogger(__name__)

NULL_REGION = -1
GREEDY_CHUNK = 2048
ASSIGN_CHUNK = 4096
REPAIR_SAMPLES = 16384
REPAIR_PASSES = 10
MAX_CANDIDATES = 1 << 18
MAX_ETA = 0.49


@dataclass(frozen=True)
class SphereNet:
    centers: np.ndarray
    separation: float
    maximal: bool

    def __len__(self) -> int:
        return len(self.centers)


@dataclass(frozen=True)
class RegionAssignment:
    region_index: np.ndarray
    centers: np.ndarray
    radius_bound: float


@dataclass(frozen=True)
class GroupPartition:
    groups: tuple[np.ndarray, ...]
    leftovers: np.ndarray
    diameter_bound: float
    centers: np.ndarray
    radii: np.ndarray
    eta: float

    @property
    def covered(self) -> int:
        return int(sum(len(g) for g in self.groups))


def random_directions(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return g / norms


def unit_rows(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized rows and a mask of the nonzero ones; zero rows stay zero."""
    norms = np.linalg.norm(points, axis=1)
    nonzero = norms > 0
    directions = np.zeros_like(points, dtype=np.float64)
    directions[nonzero] = points[nonzero] / norms[nonzero, None]
    return directions, nonzero


def _fibonacci_points(n: int) -> np.ndarray:
    golden = 0.5 * (1 + np.sqrt(5))
    i = np.arange(n, dtype=float)
    polar = np.arccos(1 - 2 * (i + 0.5) / n)
    azimuth = 2 * np.pi * i * golden
    return np.column_stack([np.cos(azimuth) * np.sin(polar), np.sin(azimuth) * np.sin(polar), np.cos(polar)])


def _circle_net(eta: float, seed: int) -> np.ndarray:
    # m equally spaced points with pi/m <= angle(eta) < 2pi/m are separated and covering
    angle = 2 * np.arcsin(eta / 2)
    m = int(np.ceil(2 * np.pi / angle)) - 1
    offset = np.random.default_rng(seed).uniform(0, 2 * np.pi / m)
    theta = offset + 2 * np.pi * np.arange(m) / m
    return np.column_stack([np.cos(theta), np.sin(theta)])


def _default_candidates(d: int, eta: float, rng: np.random.Generator) -> np.ndarray:
    count = int(min(MAX_CANDIDATES, np.ceil(8 * (2 / eta) ** (d - 1))))
    if d == 3:
        rotation, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        return _fibonacci_points(count) @ rotation.T
    return random_directions(rng, count, d)


def _greedy_extend(accepted: list[np.ndarray], candidates: np.ndarray, eta: float) -> None:
    """Appends, in order, every candidate farther than eta from all accepted centers."""
    for start in range(0, len(candidates), GREEDY_CHUNK):
        chunk = candidates[start : start + GREEDY_CHUNK]
        if accepted:
            tree = cKDTree(np.vstack(accepted))
            nearest, _ = tree.query(chunk, k=1)
            chunk = chunk[nearest > eta]
        if not len(chunk):
            continue
        gram = chunk @ chunk.T
        distance = np.sqrt(np.maximum(2 - 2 * gram, 0.0))
        alive = np.ones(len(chunk), dtype=bool)
        for i in range(len(chunk)):
            if not alive[i]:
                continue
            accepted.append(chunk[i : i + 1])
            alive &= distance[i] > eta


def build_net(d: int, eta: float, seed: int, candidates=None, validate_range: bool = True, repair: bool | None = None) -> SphereNet:
    """
    Greedy eta-separated set of unit vectors.

    Args:
        d (int): Ambient dimension, at least 2.
        eta (float): Separation. Must lie in (0, 1/2) unless validate_range is False,
            in which case any eta in (0, 2) is accepted.
        seed (int): Drives the candidate sequence and the repair samples.
        candidates (np.ndarray | None): Unit vectors to offer in order. Defaults to an
            equally spaced circle for d=2, a rotated Fibonacci sphere for d=3 and
            Gaussian directions otherwise.
        repair (bool | None): Run sampled repair passes that add uncovered directions.
            Defaults to True exactly when no candidates are given.

    Returns:
        SphereNet: The centers, eta, and whether the repair passes found no gap.
    """
    if d < 2:
        raise InputError(f"nets need d >= 2, got {d}")
    upper = 0.5 if validate_range else 2.0
    if not 0 < eta < upper:
        raise InputError(f"eta must lie in (0, {upper}), got {eta}")
    rng = np.random.default_rng(seed)
    if repair is None:
        repair = candidates is None

    if candidates is None and d == 2:
        return SphereNet(centers=_circle_net(eta, seed), separation=eta, maximal=True)

    if candidates is None:
        candidates = _default_candidates(d, eta, rng)
    candidates = np.atleast_2d(np.asarray(candidates, dtype=np.float64))
    if candidates.shape[1] != d:
        raise InputError(f"candidates have dimension {candidates.shape[1]}, expected {d}")

    accepted: list[np.ndarray] = []
    _greedy_extend(accepted, candidates, eta)
    maximal = False
    for attempt in range(REPAIR_PASSES if repair else 0):
        probes = random_directions(rng, REPAIR_SAMPLES, d)
        nearest, _ = cKDTree(np.vstack(accepted)).query(probes, k=1)
        gaps = probes[nearest > eta]
        logger.debug("net repair pass %d: %d of %d probes uncovered", attempt, len(gaps), len(probes))
        if not len(gaps):
            maximal = True
            break
        _greedy_extend(accepted, gaps, eta)
    if repair and not maximal:
        logger.warning("net at eta=%g in d=%d still has gaps after %d repair passes", eta, d, REPAIR_PASSES)
    centers = np.vstack(accepted) if accepted else np.zeros((0, d))
    return SphereNet(centers=centers, separation=eta, maximal=maximal)


def net_covering_radius(net: SphereNet, samples: int, seed: int) -> float:
    """Largest distance from a random unit vector to its nearest center."""
    probes = random_directions(np.random.default_rng(seed), samples, net.centers.shape[1])
    nearest, _ = cKDTree(net.centers).query(probes, k=1)
    return float(nearest.max())


def nearest_centers(directions: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # argmax of the inner product; first index wins ties
    out = np.empty(len(directions), dtype=np.int64)
    for start in range(0, len(directions), ASSIGN_CHUNK):
        block = directions[start : start + ASSIGN_CHUNK]
        out[start : start + ASSIGN_CHUNK] = np.argmax(block @ centers.T, axis=1)
    return out


def assign_regions(P: WeightedPointSet, net: SphereNet) -> RegionAssignment:
    if len(net) == 0:
        raise InputError("cannot assign regions of an empty net")
    directions, nonzero = unit_rows(P.points)
    region = np.full(len(P), NULL_REGION, dtype=np.int64)
    region[nonzero] = nearest_centers(directions[nonzero], net.centers)
    if nonzero.any():
        offsets = directions[nonzero] - net.centers[region[nonzero]]
        radius = float(np.linalg.norm(offsets, axis=1).max())
    else:
        radius = 0.0
    return RegionAssignment(region_index=region, centers=net.centers, radius_bound=radius)


def partition_eta(N: int, d: int, c1: float) -> float:
    return min(MAX_ETA, c1 * N ** (-1.0 / (d - 1)))


def group_partition(P: WeightedPointSet, s: int, N: int | None = None, c1: float = 1.0, seed: int = 0) -> GroupPartition:
    """
    Disjoint s-point groups of small angular diameter.

    A net at eta = c1 * N^(-1/(d-1)) is grown greedily from the data directions
    themselves, the points are assigned to its Voronoi regions, and each region is
    cut into consecutive groups of s points. The remainder of every region, and every
    zero row, is left over.
    """
    if s < 2:
        raise InputError(f"group size must be >= 2, got {s}")
    if s > len(P):
        raise DegenerateInputError(f"group size {s} exceeds the {len(P)} available points")
    d = P.dim
    if d < 2:
        raise InputError("group_partition needs d >= 2")
    N = len(P) if N is None else N
    eta = partition_eta(N, d, c1)

    directions, nonzero = unit_rows(P.points)
    order = np.random.default_rng(seed).permutation(np.flatnonzero(nonzero))
    net = build_net(d, eta, seed, candidates=directions[order], repair=False)
    assignment = assign_regions(P, net)

    groups, centers, radii, leftovers = [], [], [], [np.flatnonzero(~nonzero)]
    region = assignment.region_index
    members_by_region = np.argsort(region, kind="stable")
    boundaries = np.searchsorted(region[members_by_region], np.arange(-1, len(net) + 1))
    for r in range(len(net)):
        members = members_by_region[boundaries[r + 1] : boundaries[r + 2]]
        full = len(members) - len(members) % s
        for start in range(0, full, s):
            group = members[start : start + s]
            groups.append(group)
            centers.append(net.centers[r])
            radii.append(np.linalg.norm(directions[group] - net.centers[r], axis=1).max())
        leftovers.append(members[full:])

    return GroupPartition(
        groups=tuple(groups),
        leftovers=np.sort(np.concatenate(leftovers)),
        diameter_bound=2 * eta,
        centers=np.array(centers).reshape(-1, d),
        radii=np.array(radii, dtype=np.float64),
        eta=eta,
    )


def hyperplane_intersects(group_center, group_radius: float, x) -> bool:
    """True iff the equator of x may pass through the ball of radius group_radius around group_center."""
    if group_radius < 0:
        raise InputError("group radius must be >= 0")
    x = np.asarray(x, dtype=np.float64)
    return bool(abs(float(np.dot(x, group_center))) <= group_radius * np.linalg.norm(x))


def equator_mask(centers: np.ndarray, radii: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.abs(centers @ x) <= radii * np.linalg.norm(x)


def _check_cap_radius(d: int, r: float) -> None:
    if d < 2:
        raise InputError(f"caps need d >= 2, got {d}")
    if not 0 < r or r**2 > 2 * (1 - 1 / np.sqrt(d + 1)):
        raise InputError(f"cap radius {r} is outside (0, sqrt(2(1 - 1/sqrt(d+1)))] for d={d}")


def cap_measure_bounds(d: int, r: float) -> tuple[float, float]:
    """
    kappa_d * r^(d-1) / (1 - r^2/2) * (1 - r^2/4)^((d-1)/2) with
    kappa_d = Gamma(d/2) / (2 sqrt(pi) Gamma((d+1)/2)). The same value is returned as
    both the lower and the upper bound.
    """
    _check_cap_radius(d, r)
    kappa = gamma(d / 2) / (2 * np.sqrt(np.pi) * gamma((d + 1) / 2))
    value = float(kappa * r ** (d - 1) / (1 - r**2 / 2) * (1 - r**2 / 4) ** ((d - 1) / 2))
    return value, value


def exact_cap_measure(d: int, r: float) -> float:
    """Normalized surface measure of {y in S^{d-1} : |y - x| <= r}."""
    if d < 2 or r < 0:
        raise InputError(f"need d >= 2 and r >= 0, got d={d}, r={r}")
    if r >= 2:
        return 1.0
    cos_angle = 1 - r**2 / 2
    half = 0.5 * float(betainc((d - 1) / 2, 0.5, 1 - cos_angle**2))
    return half if cos_angle >= 0 else 1.0 - half
