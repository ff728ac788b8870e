# svm_pointquery.py

"""
Point estimates of the regularized SVM objective

    F(theta, b) = lam/2 * |(theta, b)|^2 + (1/n) sum_i max{0, 1 - y_i (theta^T x_i + b)}

from a small summary. Each label class is pre-sampled uniformly, lifted to rows
(-y x_i, 1) and compressed with the hinge coreset; the regularizer is added exactly.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from coreset_engine import CoresetSketch, build, evaluate, lift_affine
from core_model import DimensionMismatchError, InputError, WeightedPointSet, _validated
from settings import get_settings

logger = logging.getLogger(__name__)

LABELS = (1, -1)
NORM_TOL = 1e-9

__all__ = [
    "SvmDataset",
    "SvmSketch",
    "SvmBuilder",
    "lift_affine",
    "presample_size",
    "svm_build",
    "svm_query",
    "svm_query_class",
    "hinge_sketch",
    "hinge_identity_estimate",
    "exact_svm_objective",
]


class SvmDataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: np.ndarray
    labels: np.ndarray
    lam: float = 0.0
    norm_bound: Optional[float] = None

    @field_validator("points", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        value = np.asarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ValueError(f"points must be a 2-d array, got shape {value.shape}")
        if not np.all(np.isfinite(value)):
            raise ValueError("points contain non-finite values")
        return value

    @field_validator("labels", mode="before")
    @classmethod
    def _as_labels(cls, value):
        value = np.asarray(value).reshape(-1)
        if value.size and not np.all(np.isin(value, LABELS)):
            raise ValueError("labels must be +1 or -1")
        return value.astype(np.int8)

    @field_validator("lam")
    @classmethod
    def _check_lam(cls, value):
        if value < 0:
            raise ValueError(f"lam must be >= 0, got {value}")
        return value

    @model_validator(mode="after")
    def _check_shapes(self):
        if len(self.points) != len(self.labels):
            raise ValueError(f"{len(self.points)} points but {len(self.labels)} labels")
        bound = get_settings().svm_norm_bound if self.norm_bound is None else self.norm_bound
        if len(self.points) and np.linalg.norm(self.points, axis=1).max() > bound * (1 + NORM_TOL):
            raise ValueError(f"point norms must be at most {bound}")
        return self

    @classmethod
    def from_rows(cls, points, labels, lam: float = 0.0, norm_bound: float | None = None) -> "SvmDataset":
        return _validated(cls, points=points, labels=labels, lam=lam, norm_bound=norm_bound)

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class SvmSketch:
    """One hinge coreset per label over rows (-y x_i, 1); weights sum to 1 within a class."""

    d: int
    lam: float
    eps: float
    counts: dict[int, int]
    sketches: dict[int, CoresetSketch]
    presample: int

    @property
    def n(self) -> int:
        return sum(self.counts.values())

    @property
    def size(self) -> int:
        return sum(len(s) for s in self.sketches.values())


def presample_size(eps: float, c: float | None = None) -> int:
    if not 0 < eps < 1:
        raise InputError(f"eps must lie in (0, 1), got {eps}")
    c = get_settings().svm_presample_c if c is None else c
    return int(np.ceil(c / eps**2))


def _class_rows(points: np.ndarray, label: int) -> np.ndarray:
    return np.hstack([-label * points, np.ones((len(points), 1))])


@dataclass
class SvmBuilder:
    """Single pass over (x, y) pairs with a uniform reservoir of presample rows per label."""

    d: int
    eps: float
    rng: np.random.Generator
    lam: float = 0.0
    c: float | None = None
    norm_bound: float | None = None
    capacity: int = field(init=False)
    counts: dict[int, int] = field(init=False)
    reservoirs: dict[int, list[np.ndarray]] = field(init=False)

    def __post_init__(self):
        self.capacity = presample_size(self.eps, self.c)
        self.counts = {label: 0 for label in LABELS}
        self.reservoirs = {label: [] for label in LABELS}
        if self.norm_bound is None:
            self.norm_bound = get_settings().svm_norm_bound

    def ingest(self, x, y) -> "SvmBuilder":
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if len(x) != self.d:
            raise DimensionMismatchError(f"point has dimension {len(x)}, dataset has {self.d}")
        if y not in LABELS:
            raise InputError(f"labels must be +1 or -1, got {y}")
        if np.linalg.norm(x) > self.norm_bound * (1 + NORM_TOL):
            raise InputError(f"point norms must be at most {self.norm_bound}")
        label = int(y)
        self.counts[label] += 1
        reservoir, seen = self.reservoirs[label], self.counts[label]
        if len(reservoir) < self.capacity:
            reservoir.append(x)
        else:
            slot = int(self.rng.integers(seen))
            if slot < self.capacity:
                reservoir[slot] = x
        return self

    def samples(self, label: int) -> np.ndarray:
        return np.array(self.reservoirs[label]).reshape(-1, self.d)

    def finalize(self) -> SvmSketch:
        sketches = {}
        for label in LABELS:
            kept = self.samples(label)
            rows = _class_rows(kept, label)
            weights = np.full(len(rows), 1.0 / max(len(rows), 1))
            sketches[label] = build(
                WeightedPointSet.from_rows(rows, weights, p=1.0, dim=self.d + 1), self.eps, self.rng, loss="hinge"
            )
            logger.debug(
                "label %+d: %d seen, %d sampled, %d in the coreset", label, self.counts[label], len(kept), len(sketches[label])
            )
        return SvmSketch(
            d=self.d, lam=self.lam, eps=self.eps, counts=dict(self.counts), sketches=sketches, presample=self.capacity
        )


def svm_build(
    data: SvmDataset | Iterable,
    eps: float,
    rng: np.random.Generator,
    c: float | None = None,
    d: int | None = None,
    lam: float = 0.0,
) -> SvmSketch:
    """
    Builds the sketch in one pass.

    Args:
        data (SvmDataset | Iterable): A dataset, or an iterable of (x, y) pairs together
            with d (and lam, which a dataset carries itself).
        eps (float): Additive error target.
        rng (np.random.Generator): Drives the reservoirs and the coresets.
        c (float | None): Pre-sample constant, defaults to settings.svm_presample_c.

    Returns:
        SvmSketch: The per-label hinge coresets with the class counts.
    """
    if isinstance(data, SvmDataset):
        builder = SvmBuilder(data.dim, eps, rng, lam=data.lam, c=c, norm_bound=data.norm_bound)
        pairs = zip(data.points, data.labels)
    else:
        if d is None:
            raise InputError("streams of (x, y) pairs need the dimension d")
        builder = SvmBuilder(d, eps, rng, lam=lam, c=c)
        pairs = data
    for x, y in pairs:
        builder.ingest(x, int(y))
    return builder.finalize()


def _parameters(S: SvmSketch, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if len(theta) != S.d:
        raise DimensionMismatchError(f"theta has dimension {len(theta)}, sketch has {S.d}")
    return theta


def svm_query_class(S: SvmSketch, label: int, theta, b: float) -> float:
    """Mean of max{0, 1 - y (theta^T x + b)} over the class of the given label."""
    if label not in LABELS:
        raise InputError(f"labels must be +1 or -1, got {label}")
    theta = _parameters(S, theta)
    if S.counts[label] == 0:
        return 0.0
    return float(evaluate(S.sketches[label], np.append(theta, 1.0 - label * b)))


def svm_query(S: SvmSketch, theta, b: float) -> float:
    theta = _parameters(S, theta)
    regularizer = S.lam / 2 * (theta @ theta + b * b)
    if S.n == 0:
        return float(regularizer)
    loss = sum(S.counts[label] * svm_query_class(S, label, theta, b) for label in LABELS) / S.n
    return float(regularizer + loss)


def hinge_sketch(points, eps: float, rng: np.random.Generator) -> CoresetSketch:
    """Hinge coreset of rows (-x_i, 1) with weights 1/n; at (theta, b) it estimates (1/n) sum max{0, b - theta^T x_i}."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    rows = _class_rows(points, 1)
    weights = np.full(len(rows), 1.0 / max(len(rows), 1))
    return build(WeightedPointSet.from_rows(rows, weights, p=1.0, dim=points.shape[1] + 1), eps, rng, loss="hinge")


def hinge_identity_estimate(S_pos: CoresetSketch, S_neg: CoresetSketch, theta) -> float:
    """F_X(theta, 0) + F_{-X}(theta, 0), which equals (1/n) sum |theta^T x_i| for exact sketches."""
    query = np.append(np.asarray(theta, dtype=np.float64).reshape(-1), 0.0)
    return float(evaluate(S_pos, query) + evaluate(S_neg, query))


def exact_svm_objective(data: SvmDataset, theta, b: float) -> float:
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if len(theta) != data.dim:
        raise DimensionMismatchError(f"theta has dimension {len(theta)}, data has {data.dim}")
    regularizer = data.lam / 2 * (theta @ theta + b * b)
    if data.n == 0:
        return float(regularizer)
    margins = data.labels * (data.points @ theta + b)
    return float(regularizer + np.maximum(0.0, 1.0 - margins).mean())
