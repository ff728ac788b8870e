# core_model.py

import logging
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

logger = logging.getLogger(__name__)

NORMALIZED_TOL = 1e-9
UNIT_TOL = 1e-12


# Error hierarchy shared by every module; the CLI maps these onto exit codes.
class SketchError(Exception):
    pass


class InputError(SketchError, ValueError):
    pass


class DimensionMismatchError(InputError):
    pass


class DegenerateInputError(InputError):
    pass


class NumericError(SketchError, ArithmeticError):
    pass


class UnsupportedError(SketchError, NotImplementedError):
    pass


def _validated(model, **fields):
    """Builds a pydantic record, surfacing validation failures as InputError."""
    try:
        return model(**fields)
    except ValidationError as exc:
        raise InputError(exc.errors()[0]["msg"]) from exc


class WeightedPointSet(BaseModel):
    """
    The rows A_i of an n x d matrix together with nonnegative weights w_i.

    Instances are immutable; every operation that changes rows or weights
    returns a new set.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    weights: np.ndarray
    p: float = 1.0
    normalized: bool = False

    @field_validator("points", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        points = np.array(value, dtype=np.float64)
        if points.ndim == 1:
            points = points.reshape(1, -1) if points.size else points.reshape(0, 0)
        if points.ndim != 2:
            raise InputError(f"points must be a 2-d array, got shape {points.shape}")
        if not np.all(np.isfinite(points)):
            raise InputError("points contain non-finite values")
        points.setflags(write=False)
        return points

    @field_validator("weights", mode="before")
    @classmethod
    def _as_weights(cls, value):
        weights = np.array(value, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(weights)):
            raise InputError("weights contain non-finite values")
        if np.any(weights < 0):
            raise InputError("weights must be nonnegative")
        weights.setflags(write=False)
        return weights

    @field_validator("p")
    @classmethod
    def _check_p(cls, value):
        if not value >= 1:
            raise InputError(f"p must be >= 1, got {value}")
        return float(value)

    @model_validator(mode="after")
    def _check_shapes(self):
        if len(self.weights) != len(self.points):
            raise InputError(
                f"{len(self.weights)} weights given for {len(self.points)} points"
            )
        if self.normalized and len(self.weights) and abs(self.weights.sum() - 1.0) > NORMALIZED_TOL:
            raise InputError(f"weights flagged normalized but sum to {self.weights.sum()}")
        return self

    @classmethod
    def from_rows(cls, points, weights=None, p: float = 1.0, dim: Optional[int] = None) -> "WeightedPointSet":
        points = np.asarray(points, dtype=np.float64)
        if points.size == 0:
            points = np.zeros((0, dim or 0))
        elif points.ndim == 1:
            points = points.reshape(1, -1)
        if weights is None:
            weights = np.ones(len(points))
        return _validated(cls, points=points, weights=weights, p=p)

    @classmethod
    def empty(cls, dim: int, p: float = 1.0) -> "WeightedPointSet":
        return _validated(cls, points=np.zeros((0, dim)), weights=np.zeros(0), p=p)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, index, weights=None) -> "WeightedPointSet":
        index = np.asarray(index, dtype=np.int64)
        new_weights = self.weights[index] if weights is None else weights
        return _validated(WeightedPointSet, points=self.points[index], weights=new_weights, p=self.p)

    def with_weights(self, weights, normalized: bool = False) -> "WeightedPointSet":
        return _validated(WeightedPointSet, points=self.points, weights=weights, p=self.p, normalized=normalized)

    def scaled_rows(self) -> np.ndarray:
        """Rows w_i^{1/p} A_i, so that sum_i w_i |<A_i,x>|^p = ||(scaled rows) x||_p^p."""
        return self.points * (self.weights ** (1.0 / self.p))[:, None]

    def concat(self, other: "WeightedPointSet") -> "WeightedPointSet":
        if len(self) == 0:
            return other
        if len(other) == 0:
            return self
        if other.dim != self.dim:
            raise DimensionMismatchError(f"cannot concatenate dim {self.dim} with dim {other.dim}")
        return WeightedPointSet(
            points=np.vstack([self.points, other.points]),
            weights=np.concatenate([self.weights, other.weights]),
            p=self.p,
        )


class QueryDirection(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    x: np.ndarray
    on_sphere: bool = False

    @field_validator("x", mode="before")
    @classmethod
    def _as_vector(cls, value):
        x = np.array(value, dtype=np.float64).reshape(-1)
        if x.size == 0 or not np.all(np.isfinite(x)):
            raise InputError("query direction must be a nonempty finite vector")
        x.setflags(write=False)
        return x

    @model_validator(mode="after")
    def _check_unit(self):
        if self.on_sphere and abs(np.linalg.norm(self.x) - 1.0) > UNIT_TOL:
            raise InputError(f"sphere query must have unit norm, got {np.linalg.norm(self.x)}")
        return self

    @classmethod
    def parse(cls, text: str) -> "QueryDirection":
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError as e:
            raise InputError(f"cannot parse query vector {text!r}") from e
        return _validated(cls, x=values)

    @classmethod
    def unit(cls, x) -> "QueryDirection":
        x = np.asarray(x, dtype=np.float64)
        norm = np.linalg.norm(x)
        if norm == 0:
            raise InputError("cannot normalize the zero vector")
        return _validated(cls, x=x / norm, on_sphere=True)


class SketchReport(BaseModel):
    estimate: float
    additive_bound: float = 0.0
    multiplicative: bool = False

    @field_validator("additive_bound")
    @classmethod
    def _nonnegative(cls, value):
        if value < 0:
            raise InputError("additive_bound must be >= 0")
        return value


def _queries(x, dim: int) -> np.ndarray:
    if isinstance(x, QueryDirection):
        x = x.x
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != dim:
        raise DimensionMismatchError(f"query has dimension {x.shape[-1]}, points have {dim}")
    return x


def exact_lp_power(P: WeightedPointSet, x) -> float | np.ndarray:
    """
    Exact sum_i w_i |<P_i, x>|^p. Accepts a single direction or a (k, d) batch.
    """
    x = _queries(x, P.dim)
    if len(P) == 0:
        return 0.0 if x.ndim == 1 else np.zeros(len(x))
    if x.ndim == 1:
        return float(np.abs(P.points @ x) ** P.p @ P.weights)
    return (np.abs(x @ P.points.T) ** P.p) @ P.weights


def exact_affine_power(P: WeightedPointSet, x, b: float) -> float:
    """Exact sum_i w_i |<P_i, x> - b|^p."""
    x = _queries(x, P.dim)
    if len(P) == 0:
        return 0.0
    return float(np.abs(P.points @ x - b) ** P.p @ P.weights)


def exact_hinge(P: WeightedPointSet, x) -> float | np.ndarray:
    """Exact sum_i w_i max{0, <P_i, x>}."""
    x = _queries(x, P.dim)
    if len(P) == 0:
        return 0.0 if x.ndim == 1 else np.zeros(len(x))
    if x.ndim == 1:
        return float(np.maximum(P.points @ x, 0.0) @ P.weights)
    return np.maximum(x @ P.points.T, 0.0) @ P.weights


def normalize_weights(P: WeightedPointSet) -> tuple[WeightedPointSet, float]:
    total = P.total_weight
    if not total > 0:
        raise DegenerateInputError("cannot normalize a point set whose weights sum to zero")
    return P.with_weights(P.weights / total, normalized=True), total


def _dyadic(count: float) -> int:
    return 1 << max(0, int(np.ceil(np.log2(max(count, 1.0)))))


def query_net(d: int, net_resolution: float, seed: int) -> np.ndarray:
    """
    Test-grade net of S^{d-1}. d=2 uses a dyadic lattice on angles with spacing at most
    net_resolution; d>=3 uses +-e_i plus seeded Gaussian directions. A random part of
    fixed size is added for every d. Finer resolutions give supersets of coarser nets.
    """
    if not 0 < net_resolution < 1:
        raise InputError(f"net_resolution must lie in (0,1), got {net_resolution}")
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal((256, d))
    if d == 2:
        count = _dyadic(2 * np.pi / net_resolution)
        theta = 2 * np.pi * np.arange(count) / count
        lattice = np.column_stack([np.cos(theta), np.sin(theta)])
    else:
        eye = np.eye(d)
        count = _dyadic(min((1.0 / net_resolution) ** (d - 1), 1 << 16))
        gaussian = np.random.default_rng([seed, 1]).standard_normal((count, d))
        lattice = np.vstack([eye, -eye, gaussian])
    directions = np.vstack([lattice, extra])
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def sup_error_on_net(
    P: WeightedPointSet,
    sketch_eval: Callable[[np.ndarray], np.ndarray],
    net_resolution: float,
    seed: int,
    batched: bool = True,
) -> tuple[float, int]:
    """
    Measures max_x |sketch(x) - exact(x)| over a net of the unit sphere.

    Args:
        P (WeightedPointSet): The point set the sketch summarizes.
        sketch_eval (Callable): Maps a (k, d) array of directions to k estimates, or a
            single direction to one estimate when batched is False.
        net_resolution (float): Lattice spacing in (0, 1).
        seed (int): Seed for the random part of the net.
        batched (bool): Whether sketch_eval accepts a batch.

    Returns:
        tuple[float, int]: The sup error and the number of directions evaluated.
    """
    directions = query_net(P.dim, net_resolution, seed)
    exact = exact_lp_power(P, directions)
    if batched:
        estimates = np.asarray(sketch_eval(directions), dtype=np.float64)
    else:
        estimates = np.array([sketch_eval(x) for x in directions], dtype=np.float64)
    return float(np.max(np.abs(estimates - exact))), len(directions)
