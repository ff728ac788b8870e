# coreset_engine.py

"""
Coresets for sums of |<A_i, x>|^p.

One halving round groups the light points into small, angularly narrow groups and
replaces every group by a Caratheodory subset carrying the same p-th tensor sum. A
query x only sees an error from the groups its equator cuts through; those are
recorded as equator bands so every sketch can bound its own error at a given x.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from caratheodory import decompose, sample
from core_model import (
    DegenerateInputError,
    DimensionMismatchError,
    InputError,
    QueryDirection,
    SketchReport,
    UnsupportedError,
    WeightedPointSet,
    exact_hinge,
    exact_lp_power,
)
from linear_rounding import RoundingTransform, john_round
from settings import get_settings
from sphere_geometry import MAX_ETA, exact_cap_measure, group_partition, partition_eta, unit_rows
from tensor_algebra import symmetric_dimension, tensor_powers

logger = logging.getLogger(__name__)

LOSSES = ("lp", "hinge")
MODES = ("additive", "multiplicative")
MAX_C1_DOUBLINGS = 12


@dataclass(frozen=True)
class EquatorBands:
    """
    Groups that were replaced by a subset: unit centers c_g, radii r_g and coefficients
    W_g * max|y|^p * (2 r_g)^p. A query x picks up coefficient g whenever
    |<c_g, x>| <= r_g |x|.
    """

    centers: np.ndarray
    radii: np.ndarray
    coeffs: np.ndarray
    p: float

    @classmethod
    def empty(cls, d: int, p: float) -> "EquatorBands":
        return cls(centers=np.zeros((0, d)), radii=np.zeros(0), coeffs=np.zeros(0), p=p)

    def __len__(self) -> int:
        return len(self.radii)

    def bound(self, x) -> float | np.ndarray:
        X = np.atleast_2d(np.asarray(x, dtype=np.float64))
        norms = np.linalg.norm(X, axis=1)
        if len(self):
            hit = np.abs(X @ self.centers.T) <= self.radii[None, :] * norms[:, None]
            out = (hit @ self.coeffs) * norms**self.p
        else:
            out = np.zeros(len(X))
        return float(out[0]) if np.ndim(x) == 1 else out

    def scale(self, c: float) -> "EquatorBands":
        return EquatorBands(self.centers, self.radii, c * self.coeffs, self.p)

    def concat(self, other: "EquatorBands") -> "EquatorBands":
        return EquatorBands(
            centers=np.vstack([self.centers, other.centers]),
            radii=np.concatenate([self.radii, other.radii]),
            coeffs=np.concatenate([self.coeffs, other.coeffs]),
            p=self.p,
        )


@dataclass(frozen=True)
class HalvingStep:
    result: WeightedPointSet
    groups: tuple[np.ndarray, ...]
    replacements: tuple[np.ndarray, ...]
    bands: EquatorBands
    c1: float
    degenerate_groups: int = 0

    def error_bound(self, x) -> float | np.ndarray:
        return self.bands.bound(x)

    @property
    def removed(self) -> int:
        return int(sum(len(g) - len(r) for g, r in zip(self.groups, self.replacements)))


@dataclass(frozen=True)
class CoresetSketch:
    """
    Weighted rows B_i standing in for a larger set. With a transform the bands live in
    rounded coordinates u = T^+ x. A sketch without bands reports its budget instead
    of a per-query bound.
    """

    base: WeightedPointSet
    error_budget: float
    bands: EquatorBands | None = None
    transform: RoundingTransform | None = None
    rounds: int = 0
    loss: str = "lp"
    lifted: bool = False
    source_size: int = 0
    multiplicative: bool = field(default=False)

    @property
    def p(self) -> float:
        return self.base.p

    @property
    def d(self) -> int:
        return self.base.dim

    def __len__(self) -> int:
        return len(self.base)

    def error_bound(self, x) -> float | np.ndarray | None:
        if self.bands is None:
            return None
        x = np.asarray(x, dtype=np.float64)
        if self.transform is not None:
            x = x @ self.transform.left_inverse.T
        return self.bands.bound(x)


def coreset_target_size(d: int, p: float, eps: float, c_size: float | None = None) -> int:
    """c_size * eps^(-2(d-1)/(d+2p)) * log^((d-1)/(d+2p))(1/eps), rounded up."""
    if not 0 < eps < 1:
        raise InputError(f"eps must lie in (0, 1), got {eps}")
    c_size = get_settings().coreset_c_size if c_size is None else c_size
    exponent = (d - 1) / (d + 2 * p)
    return max(1, int(np.ceil(c_size * eps ** (-2 * exponent) * np.log(1 / eps) ** exponent)))


def halving_floor(d: int, p: float) -> int:
    """
    Size below which a halving round may stall. At most R = 1 / mu(cap of radius
    MAX_ETA / 2) MAX_ETA-separated centers fit on the sphere, so the partition leaves at
    most (s - 1) R light points in remainders; above 4 s R at least a quarter of the points
    sit in full groups and a round removes at least an eighth.
    """
    if d < 2 or int(p) != p:
        return 0
    s = 2 * (symmetric_dimension(d, int(p)) + 1)
    centers = int(1 / exact_cap_measure(d, MAX_ETA / 2))
    return max(get_settings().min_halve_size, 4 * s * centers)


def lift_affine(A: WeightedPointSet) -> WeightedPointSet:
    """Rows (A_i, -1), so that sum_i w_i |<A_i, x> - b|^p is the plain lp power at (x, b)."""
    lifted = np.hstack([A.points, -np.ones((len(A), 1))])
    return WeightedPointSet.from_rows(lifted, A.weights, p=A.p, dim=A.dim + 1)


def _check_loss(loss: str, p: float) -> None:
    if loss not in LOSSES:
        raise InputError(f"unknown loss {loss!r}, expected one of {LOSSES}")
    if loss == "hinge" and p != 1:
        raise InputError(f"the hinge loss needs p = 1, got {p}")


def collapse_line(P: WeightedPointSet, loss: str = "lp") -> WeightedPointSet:
    # d = 1: sum_i w_i |a_i x|^p = |x|^p sum_i w_i |a_i|^p
    a = P.points[:, 0]
    if loss == "hinge":
        rows = [[1.0], [-1.0]]
        weights = [float(P.weights[a > 0] @ a[a > 0]), float(-(P.weights[a < 0] @ a[a < 0]))]
        return WeightedPointSet.from_rows(rows, weights, p=P.p)
    return WeightedPointSet.from_rows([[1.0]], [float(P.weights @ np.abs(a) ** P.p)], p=P.p)


def _partition_light(light: WeightedPointSet, s: int, c1: float, rng: np.random.Generator):
    seed = int(rng.integers(2**32))
    for _ in range(MAX_C1_DOUBLINGS):
        partition = group_partition(light, s=s, c1=c1, seed=seed)
        if 2 * partition.covered >= len(light) or partition.eta >= MAX_ETA:
            return partition, c1
        c1 *= 2
    return partition, c1


def halving_step(
    P: WeightedPointSet,
    rng: np.random.Generator,
    s: int | None = None,
    c1: float | None = None,
    min_size: int | None = None,
) -> HalvingStep:
    """
    One round of group-and-replace.

    Points of weight at most twice the mean are grouped with
    sphere_geometry.group_partition (s = 2(D+1), D the number of tensor slots), c1
    doubling until at least half of them are covered. Each group's p-th tensors are
    decomposed with weights normalized inside the group and one subset is drawn; its
    weights are scaled back by the group weight. Everything else keeps its weight.

    Args:
        P (WeightedPointSet): The set to halve; p must be an integer.
        rng (np.random.Generator): Drives the partition seed and the subset draws.
        s (int | None): Group size, defaults to 2(D+1).
        c1 (float | None): Initial partition constant.
        min_size (int | None): Below this size the step is the identity.

    Returns:
        HalvingStep: The halved set, the groups and what replaced them, and the bands.
    """
    settings = get_settings()
    c1 = settings.partition_c1 if c1 is None else c1
    min_size = settings.min_halve_size if min_size is None else min_size
    d, p = P.dim, P.p
    identity = HalvingStep(result=P, groups=(), replacements=(), bands=EquatorBands.empty(d, p), c1=c1)
    if len(P) < min_size or d < 2:
        return identity
    if int(p) != p:
        raise UnsupportedError(f"tensor coresets need an integer p, got {p}")
    D = symmetric_dimension(d, int(p))
    s = 2 * (D + 1) if s is None else s
    if s < D + 2:
        raise InputError(f"group size {s} cannot be reduced in {D} tensor slots; need at least {D + 2}")

    light_index = np.flatnonzero(P.weights <= 2 * P.weights.mean())
    if len(light_index) < s:
        return identity
    partition, c1 = _partition_light(P.subset(light_index), s, c1, rng)

    weights = P.weights.copy()
    dropped = np.zeros(len(P), dtype=bool)
    norms = np.linalg.norm(P.points, axis=1)
    groups, replacements, coeffs, degenerate = [], [], [], 0
    for local in partition.groups:
        group = light_index[local]
        W = float(P.weights[group].sum())
        if W == 0:
            dropped[group] = True
            groups.append(group)
            replacements.append(group[:0])
            coeffs.append(0.0)
            continue
        dist = decompose(tensor_powers(P.points[group], int(p)), P.weights[group] / W)
        degenerate += dist.degenerate
        chosen, chosen_weights = sample(dist, rng)
        dropped[group] = True
        dropped[group[chosen]] = False
        weights[group[chosen]] = chosen_weights * W
        groups.append(group)
        replacements.append(group[chosen])
        coeffs.append(W * norms[group].max() ** p)
    if degenerate:
        logger.warning("%d of %d groups kept verbatim after a degenerate decomposition", degenerate, len(groups))

    keep = np.flatnonzero(~dropped)
    radii = partition.radii
    bands = EquatorBands(
        centers=partition.centers,
        radii=radii,
        coeffs=np.asarray(coeffs) * (2 * radii) ** p,
        p=p,
    )
    result = P.subset(keep, weights[keep])
    logger.debug(
        "halving: %d -> %d points in %d groups (c1=%g, eta=%.3g)", len(P), len(result), len(groups), c1, partition.eta
    )
    return HalvingStep(
        result=result,
        groups=tuple(groups),
        replacements=tuple(replacements),
        bands=bands,
        c1=c1,
        degenerate_groups=degenerate,
    )


def halve(P: WeightedPointSet, s: int, rng: np.random.Generator) -> WeightedPointSet:
    return halving_step(P, rng, s=s).result


def _empty_sketch(P: WeightedPointSet, eps: float, loss: str) -> CoresetSketch:
    return CoresetSketch(
        base=WeightedPointSet.empty(P.dim, P.p), error_budget=eps, bands=EquatorBands.empty(P.dim, P.p), loss=loss
    )


def build_additive(
    P: WeightedPointSet,
    eps: float,
    rng: np.random.Generator,
    c_size: float | None = None,
    loss: str = "lp",
) -> CoresetSketch:
    """
    Halves until the size target c_size * eps^(-2(d-1)/(d+2p)) * log^((d-1)/(d+2p))(1/eps)
    is met or a round removes less than the stall fraction of the points.

    Weights are normalized for the rounds and scaled back afterwards, so the sketch
    estimates the same sum as P.
    """
    _check_loss(loss, P.p)
    settings = get_settings()
    target = coreset_target_size(P.dim, P.p, eps, c_size)
    if np.any(P.weights == 0):
        P = P.subset(np.flatnonzero(P.weights > 0))
    if len(P) == 0:
        return _empty_sketch(P, eps, loss)
    source_size = len(P)
    if P.dim == 1:
        return CoresetSketch(
            base=collapse_line(P, loss), error_budget=eps, bands=EquatorBands.empty(1, P.p), loss=loss,
            source_size=source_size,
        )
    if len(P) <= target:
        return CoresetSketch(
            base=P, error_budget=eps, bands=EquatorBands.empty(P.dim, P.p), loss=loss, source_size=source_size
        )

    total = P.total_weight
    current = P.with_weights(P.weights / total)
    bands = EquatorBands.empty(P.dim, P.p)
    c1, rounds = settings.partition_c1, 0
    while len(current) > target:
        step = halving_step(current, rng, c1=c1)
        rounds += 1
        bands = bands.concat(step.bands)
        removed = len(current) - len(step.result)
        current, c1 = step.result, step.c1
        if removed < settings.stall_fraction * (len(current) + removed):
            logger.debug("halving stalled at %d points after %d rounds", len(current), rounds)
            break
    logger.debug("additive coreset: %d -> %d points in %d rounds (target %d)", source_size, len(current), rounds, target)
    return CoresetSketch(
        base=current.with_weights(current.weights * total),
        error_budget=eps,
        bands=bands.scale(total),
        rounds=rounds,
        loss=loss,
        source_size=source_size,
    )


def build_multiplicative(
    A: WeightedPointSet, eps: float, rng: np.random.Generator, c_size: float | None = None
) -> CoresetSketch:
    """
    Rounds Z(A) with john_round, splits every rounded row A'_i = A_i T into its direction
    and the weight w_i |A'_i|^p, builds the additive coreset of the directions and maps
    the chosen rows back through T^+.
    """
    rounding = john_round(A)
    rounded = rounding.to_rounded(A.points)
    directions, nonzero = unit_rows(rounded)
    row_weights = A.weights * np.linalg.norm(rounded, axis=1) ** A.p
    keep = nonzero & (row_weights > 0)
    W = float(row_weights[keep].sum())
    inner = build_additive(
        WeightedPointSet.from_rows(directions[keep], row_weights[keep] / W, p=A.p), eps, rng, c_size=c_size
    )
    base = WeightedPointSet.from_rows(
        rounding.from_rounded(inner.base.points), inner.base.weights * W, p=A.p, dim=A.dim
    )
    return CoresetSketch(
        base=base,
        error_budget=eps,
        bands=inner.bands.scale(W),
        transform=rounding,
        rounds=inner.rounds,
        source_size=len(A),
        multiplicative=True,
    )


def build(
    P: WeightedPointSet,
    eps: float,
    rng: np.random.Generator,
    mode: str = "additive",
    loss: str = "lp",
    c_size: float | None = None,
) -> CoresetSketch:
    if mode not in MODES:
        raise InputError(f"unknown mode {mode!r}, expected one of {MODES}")
    if mode == "multiplicative":
        if loss != "lp":
            raise UnsupportedError("multiplicative coresets are only built for the lp loss")
        if not np.any(P.weights > 0) or not np.any(P.points[P.weights > 0]):
            return _empty_sketch(P, eps, loss)
        return build_multiplicative(P, eps, rng, c_size=c_size)
    return build_additive(P, eps, rng, c_size=c_size, loss=loss)


def build_affine(A: WeightedPointSet, eps: float, rng: np.random.Generator, mode: str = "additive") -> CoresetSketch:
    """Coreset of the lifted rows (A_i, -1); query it with query(S, x, b=...)."""
    sketch = build(lift_affine(A), eps, rng, mode=mode)
    return replace(sketch, lifted=True)


def _lifted_queries(S: CoresetSketch, x, b) -> np.ndarray:
    if isinstance(x, QueryDirection):
        x = x.x
    x = np.asarray(x, dtype=np.float64)
    if S.lifted:
        b = 0.0 if b is None else b
        offsets = np.broadcast_to(np.asarray(b, dtype=np.float64), x.shape[:-1] + (1,))
        x = np.concatenate([x, offsets], axis=-1)
    elif b is not None:
        raise InputError("an offset b needs a sketch built with build_affine")
    if x.shape[-1] != S.d:
        raise DimensionMismatchError(f"query has dimension {x.shape[-1]}, sketch has {S.d}")
    return x


def evaluate(S: CoresetSketch, X, b=None) -> float | np.ndarray:
    """Sketch values at one direction or a (k, d) batch."""
    X = _lifted_queries(S, X, b)
    if S.loss == "hinge":
        return exact_hinge(S.base, X)
    return exact_lp_power(S.base, X)


def query(S: CoresetSketch, x, b: float | None = None) -> SketchReport:
    y = _lifted_queries(S, x, b)
    if y.ndim != 1:
        raise InputError("query takes a single direction; use evaluate for batches")
    estimate = float(evaluate(S, y))
    bound = S.error_bound(y)
    if bound is None:
        scale = abs(estimate) if S.multiplicative else S.base.total_weight * np.linalg.norm(y) ** S.p
        bound = S.error_budget * scale
    return SketchReport(estimate=estimate, additive_bound=float(bound), multiplicative=S.multiplicative)
