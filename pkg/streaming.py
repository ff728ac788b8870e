# streaming.py

"""
One-pass summaries of a row stream: merge-and-reduce over coreset blocks, the
sensitivity-sampled two-tier pipeline, the constant-update region sketch and the
truncated Fourier sketch for d = 2.
"""

import asyncio
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from coreset_engine import CoresetSketch, EquatorBands, build, coreset_target_size, halving_floor
from core_model import DimensionMismatchError, InputError, UnsupportedError, WeightedPointSet
from harmonics_lab import lambda_k_circle
from linear_rounding import ConditionedBasis, sensitivity_upper, well_conditioned_basis
from settings import get_settings
from sphere_geometry import build_net, nearest_centers
from tensor_algebra import apply_directions, symmetric_dimension, tensor_powers

logger = logging.getLogger(__name__)

DEFAULT_STREAM_LENGTH = 1 << 20
MIN_EPOCH = 1024
SENSITIVITY_TRACKER_EPS = 0.5


def _check_eps(eps: float) -> None:
    if not 0 < eps < 1:
        raise InputError(f"eps must lie in (0, 1), got {eps}")


def _as_row(row, d: int) -> np.ndarray:
    row = np.asarray(row, dtype=np.float64).reshape(-1)
    if len(row) != d:
        raise DimensionMismatchError(f"row has dimension {len(row)}, stream has {d}")
    if not np.all(np.isfinite(row)):
        raise InputError("row contains non-finite values")
    return row


class MergeReduceState:
    """
    Blocks B_0..B_L of a merge-and-reduce tree. B_0 collects raw rows; when it is full
    it is merged with B_1..B_{i-1} and reduced into the first empty B_i by a coreset at
    budget gamma = eps / log2(n). The block size is at least halving_floor(d, p).
    """

    def __init__(
        self,
        d: int,
        p: float,
        eps: float,
        rng: np.random.Generator,
        n_hint: int | None = None,
        mode: str = "multiplicative",
        c_size: float | None = None,
    ):
        _check_eps(eps)
        self.d, self.p, self.eps, self.rng, self.mode = d, float(p), eps, rng, mode
        self.c_size = c_size
        self.n_hint = n_hint or DEFAULT_STREAM_LENGTH
        self.gamma = eps / max(1.0, np.log2(self.n_hint))
        self.block_size = max(coreset_target_size(d, self.p, self.gamma, c_size), halving_floor(d, self.p))
        self.blocks: list[WeightedPointSet | None] = []
        self._rows: list[np.ndarray] = []
        self._weights: list[float] = []
        self.n_seen = 0
        self.reduces = 0
        self.peak_rows = 0
        self.oversized = 0

    @property
    def stored_rows(self) -> int:
        return len(self._rows) + sum(len(b) for b in self.blocks if b is not None)

    def _buffer(self) -> WeightedPointSet:
        return WeightedPointSet.from_rows(np.array(self._rows).reshape(-1, self.d), self._weights, p=self.p, dim=self.d)

    def stored(self) -> WeightedPointSet:
        """Everything currently held: raw rows and reduced blocks, unreduced."""
        out = self._buffer()
        for block in self.blocks:
            if block is not None:
                out = out.concat(block)
        return out

    def _reduce(self) -> None:
        level = next((i for i, b in enumerate(self.blocks) if b is None), len(self.blocks))
        if level == len(self.blocks):
            self.blocks.append(None)
        merged = self._buffer()
        for i in range(level):
            merged = merged.concat(self.blocks[i])
            self.blocks[i] = None
        block = build(merged, self.gamma, self.rng, mode=self.mode, c_size=self.c_size).base
        if len(block) > self.block_size:
            self.oversized += 1
            logger.warning("reduce stalled: block %d holds %d rows, above the block size %d", level, len(block), self.block_size)
        self.blocks[level] = block
        self._rows, self._weights = [], []
        self.reduces += 1
        logger.debug("reduce %d: %d rows into block %d of size %d", self.reduces, len(merged), level, len(self.blocks[level]))

    def ingest(self, row, weight: float = 1.0) -> "MergeReduceState":
        row = _as_row(row, self.d)
        if weight < 0:
            raise InputError(f"weights must be nonnegative, got {weight}")
        if len(self._rows) >= self.block_size:
            self._reduce()
        self._rows.append(row)
        self._weights.append(float(weight))
        self.n_seen += 1
        self.peak_rows = max(self.peak_rows, self.stored_rows)
        return self

    def finalize(self) -> CoresetSketch:
        stored = self.stored()
        if self.reduces == 0:
            return CoresetSketch(
                base=stored, error_budget=0.0, bands=EquatorBands.empty(self.d, self.p), source_size=self.n_seen
            )
        sketch = build(stored, self.eps, self.rng, mode=self.mode, c_size=self.c_size)
        levels = len(self.blocks)
        return CoresetSketch(
            base=sketch.base,
            error_budget=float((1 + self.gamma) ** levels * (1 + self.eps) - 1),
            rounds=self.reduces,
            source_size=self.n_seen,
            multiplicative=sketch.multiplicative,
        )


def mr_ingest(state: MergeReduceState, row, weight: float = 1.0) -> MergeReduceState:
    return state.ingest(row, weight)


def mr_finalize(state: MergeReduceState) -> CoresetSketch:
    return state.finalize()


class SensitivitySampler:
    """
    Two-tier pipeline: a constant-accuracy merge-and-reduce tracks the prefix and
    prices every new row by its online sensitivity; rows survive with probability
    p_t = min(1, beta * tau_t) and enter the eps-accurate tier reweighted by 1/p_t.
    """

    def __init__(
        self,
        d: int,
        p: float,
        eps: float,
        rng: np.random.Generator,
        n_hint: int | None = None,
        scale: float | None = None,
    ):
        _check_eps(eps)
        scale = get_settings().sensitivity_scale if scale is None else scale
        self.d, self.p, self.eps, self.rng = d, float(p), eps, rng
        self.beta = scale * d * np.log(1 / eps) / eps**2
        self.tracker = MergeReduceState(d, p, SENSITIVITY_TRACKER_EPS, rng, n_hint=n_hint)
        self.sampler = MergeReduceState(d, p, eps, rng, n_hint=n_hint)
        self.basis: ConditionedBasis | None = None
        self._basis_reduces = 0
        self.sampled = 0
        self.tau_sum = 0.0
        self.expected_samples = 0.0

    def _refresh_basis(self) -> None:
        stored = self.tracker.stored()
        if len(stored) and np.any(stored.scaled_rows()):
            self.basis = well_conditioned_basis(stored)
        self._basis_reduces = self.tracker.reduces

    def ingest(self, row, weight: float = 1.0) -> "SensitivitySampler":
        row = _as_row(row, self.d)
        seen = self.tracker.n_seen
        # refresh after every reduce and at powers of two before the first one
        if self.tracker.reduces != self._basis_reduces or (seen and seen & (seen - 1) == 0):
            self._refresh_basis()
        tau = sensitivity_upper(self.basis, row * weight ** (1 / self.p), self.p)
        self.tracker.ingest(row, weight)
        keep = min(1.0, self.beta * tau)
        self.tau_sum += tau
        self.expected_samples += keep
        if keep > 0 and (keep >= 1.0 or self.rng.random() < keep):
            self.sampler.ingest(row, weight / keep)
            self.sampled += 1
        return self

    def finalize(self) -> CoresetSketch:
        logger.debug(
            "sensitivity sampling kept %d of %d rows (expected %.1f)", self.sampled, self.tracker.n_seen, self.expected_samples
        )
        sketch = self.sampler.finalize()
        return replace(sketch, error_budget=max(sketch.error_budget, self.eps))


def sensitivity_stream(rows, eps: float, rng: np.random.Generator, p: float = 1.0, n_hint: int | None = None) -> CoresetSketch:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    sampler = SensitivitySampler(rows.shape[1], p, eps, rng, n_hint=n_hint or len(rows))
    for row in rows:
        sampler.ingest(row)
    return sampler.finalize()


@dataclass
class RegionRecord:
    """Running summary of one region generation: tensor sum, count and a reservoir sample."""

    center: np.ndarray
    level: int
    index: int
    generation: int
    tensor: np.ndarray
    count: int = 0
    sample: np.ndarray | None = None
    radius: float = 0.0
    closed: bool = False

    def offer(self, row: np.ndarray, rng: np.random.Generator) -> None:
        self.count += 1
        if self.count == 1 or rng.random() < 1.0 / self.count:
            self.sample = row


@dataclass
class RegionSketch:
    """
    Regions are the Voronoi cells of an eta-net; every region keeps the exact p-th tensor
    sum of its rows and one uniformly sampled row. A region holding more than the split
    threshold is closed and a fresh generation opened (or, in tight mode, its rows move
    to the finer net of the next level).
    """

    d: int
    p: int
    eps: float
    seed: int = 0
    n_hint: int | None = None
    tight: bool = False
    eta: float = field(init=False)
    records: list[RegionRecord] = field(init=False, default_factory=list)
    n_seen: int = field(init=False, default=0)
    ignored: int = field(init=False, default=0)
    slot_updates: int = field(init=False, default=0)

    def __post_init__(self):
        _check_eps(self.eps)
        if int(self.p) != self.p or self.p < 1:
            raise UnsupportedError(f"region sketches store integer tensor powers, got p={self.p}")
        self.p = int(self.p)
        if self.d < 2:
            raise InputError(f"region sketches need d >= 2, got {self.d}")
        if self.tight:
            if self.d > 2 * self.p + 2:
                raise UnsupportedError(f"tight mode needs d <= 2p + 2, got d={self.d}, p={self.p}")
            self.eta = self.eps ** (2 / (self.d + 2 * self.p))
        else:
            self.eta = self.eps ** (2 / (self.d + 2 * self.p - 1))
        self.rng = np.random.default_rng(self.seed)
        self._nets: dict[int, np.ndarray] = {}
        self._open: dict[tuple[int, int], RegionRecord] = {}
        self._split: set[tuple[int, int]] = set()
        self._generations: dict[tuple[int, int], int] = {}
        self.max_level = 0
        if self.tight:
            while self.eta / 2 ** (self.max_level + 1) >= self.eps:
                self.max_level += 1

    @property
    def slots(self) -> int:
        return symmetric_dimension(self.d, self.p)

    @property
    def tensor_slots(self) -> int:
        return len(self.records) * self.slots

    @property
    def n(self) -> int:
        return self.n_seen + self.ignored

    @property
    def split_keys(self) -> list[tuple[int, int]]:
        return sorted(self._split)

    def restore(
        self, records: list[RegionRecord], split_keys, rng_state: dict, n_seen: int, ignored: int, slot_updates: int
    ) -> "RegionSketch":
        """Reinstates saved records and counters so that ingestion continues where it stopped."""
        self.records = list(records)
        self._split = {tuple(key) for key in split_keys}
        self._open, self._generations = {}, {}
        for record in self.records:
            key = (record.level, record.index)
            self._generations[key] = max(self._generations.get(key, 0), record.generation + 1)
            if not record.closed:
                self._open[key] = record
        self.rng.bit_generator.state = rng_state
        self.n_seen, self.ignored, self.slot_updates = n_seen, ignored, slot_updates
        return self

    def _net(self, level: int) -> np.ndarray:
        if level not in self._nets:
            net = build_net(self.d, self.eta / 2**level, self.seed + level, validate_range=False)
            self._nets[level] = net.centers
        return self._nets[level]

    def threshold(self) -> float:
        if self.n_hint:
            n = self.n_hint
        else:
            n = max(MIN_EPOCH, 1 << int(np.ceil(np.log2(max(self.n, 1)))))
        return max(1.0, self.eta ** (self.d - 1) * n)

    def _locate(self, direction: np.ndarray) -> tuple[int, int]:
        level = 0
        while True:
            index = int(nearest_centers(direction[None, :], self._net(level))[0])
            if (level, index) not in self._split:
                return level, index
            level += 1

    def _record(self, key: tuple[int, int]) -> RegionRecord:
        record = self._open.get(key)
        if record is None:
            generation = self._generations.get(key, 0)
            self._generations[key] = generation + 1
            record = RegionRecord(
                center=self._net(key[0])[key[1]],
                level=key[0],
                index=key[1],
                generation=generation,
                tensor=np.zeros(self.slots),
            )
            self._open[key] = record
            self.records.append(record)
        return record

    def ingest(self, row) -> "RegionSketch":
        row = _as_row(row, self.d)
        norm = float(np.linalg.norm(row))
        if norm == 0:
            self.ignored += 1
            return self
        direction = row / norm
        key = self._locate(direction)
        record = self._record(key)
        record.tensor += tensor_powers(row[None, :], self.p)[0]
        self.slot_updates += self.slots
        record.offer(row, self.rng)
        record.radius = max(record.radius, float(np.linalg.norm(direction - record.center)))
        self.n_seen += 1
        if record.count >= self.threshold():
            record.closed = True
            del self._open[key]
            if self.tight and key[0] < self.max_level:
                self._split.add(key)
            logger.debug("closed region %s generation %d at %d rows", key, record.generation, record.count)
        return self

    def ingest_many(self, rows) -> "RegionSketch":
        for row in np.atleast_2d(np.asarray(rows, dtype=np.float64)):
            self.ingest(row)
        return self

    def query(self, x) -> float | np.ndarray:
        """
        (1/n) * [sum over regions the equator of x misses of |<q_i, x^p>| + sum over the
        rest of c_i |<x, z_i>|^p].
        """
        X = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if X.shape[1] != self.d:
            raise DimensionMismatchError(f"query has dimension {X.shape[1]}, sketch has {self.d}")
        if not self.records or self.n == 0:
            out = np.zeros(len(X))
        else:
            centers = np.array([r.center for r in self.records])
            radii = np.array([r.radius for r in self.records])
            counts = np.array([r.count for r in self.records], dtype=np.float64)
            samples = np.array([r.sample for r in self.records])
            tensors = np.array([r.tensor for r in self.records])
            norms = np.linalg.norm(X, axis=1)
            crossed = np.abs(X @ centers.T) <= radii[None, :] * norms[:, None]
            exact = np.abs(apply_directions(tensors, self.d, self.p, X))
            sampled = counts[None, :] * np.abs(X @ samples.T) ** self.p
            out = np.where(crossed, sampled, exact).sum(axis=1) / self.n
        return float(out[0]) if np.ndim(x) == 1 else out


def region_ingest(S: RegionSketch, row) -> RegionSketch:
    return S.ingest(row)


def region_query(S: RegionSketch, x) -> float | np.ndarray:
    return S.query(x)


class RegionEnsemble:
    """Median over independent region sketches of the same stream, seeded seed..seed+R-1."""

    def __init__(self, sketches: list[RegionSketch]):
        if not sketches:
            raise InputError("an ensemble needs at least one sketch")
        self.sketches = sketches

    @classmethod
    def create(cls, d: int, p: int, eps: float, replicas: int | None = None, seed: int = 0, **kwargs) -> "RegionEnsemble":
        replicas = get_settings().median_replicas if replicas is None else replicas
        return cls([RegionSketch(d, p, eps, seed=seed + k, **kwargs) for k in range(replicas)])

    @classmethod
    def from_rows(cls, rows, p: int, eps: float, replicas: int | None = None, seed: int = 0, **kwargs) -> "RegionEnsemble":
        return asyncio.run(build_region_ensemble(rows, p, eps, replicas=replicas, seed=seed, **kwargs))

    def ingest(self, row) -> "RegionEnsemble":
        for sketch in self.sketches:
            sketch.ingest(row)
        return self

    def query(self, x) -> float | np.ndarray:
        values = np.array([sketch.query(x) for sketch in self.sketches])
        median = np.median(values, axis=0)
        return float(median) if np.ndim(x) == 1 else median


async def build_region_ensemble(rows, p: int, eps: float, replicas: int | None = None, seed: int = 0, **kwargs) -> RegionEnsemble:
    """Builds the replicas concurrently, at most settings.threads at a time."""
    settings = get_settings()
    replicas = settings.median_replicas if replicas is None else replicas
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    semaphore = asyncio.Semaphore(settings.threads)

    async def one(k: int) -> RegionSketch:
        async with semaphore:
            sketch = RegionSketch(rows.shape[1], p, eps, seed=seed + k, **kwargs)
            return await asyncio.to_thread(sketch.ingest_many, rows)

    sketches = await asyncio.gather(*(one(k) for k in range(replicas)))
    return RegionEnsemble(list(sketches))


def region_query_forall(ensemble: RegionEnsemble, x) -> float | np.ndarray:
    return ensemble.query(x)


def fourier_order(eps: float, p: float, c: float | None = None) -> int:
    """K = ceil(c * (1/eps)^(1/p) * log^(1/p)(1/eps))."""
    _check_eps(eps)
    c = get_settings().fourier_c if c is None else c
    return max(2, int(np.ceil(c * (1 / eps) ** (1 / p) * np.log(1 / eps) ** (1 / p))))


@dataclass
class FourierSketch:
    """
    d = 2 sketch of sum_i w_i |<a_i, x>|^p through the cosine series of |cos|^p:
    |cos t|^p = lambda_0 + 2 sum_{k >= 1} lambda_k cos(k t), truncated at K.
    """

    p: float
    K: int
    cos_moments: np.ndarray = field(init=False)
    sin_moments: np.ndarray = field(init=False)
    lambdas: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.p < 1:
            raise InputError(f"p must be >= 1, got {self.p}")
        if self.K < 0:
            raise InputError(f"truncation order must be >= 0, got {self.K}")
        self.cos_moments = np.zeros(self.K + 1)
        self.sin_moments = np.zeros(self.K + 1)
        self.lambdas = np.array([lambda_k_circle(self.p, k) for k in range(self.K + 1)])

    @classmethod
    def for_eps(cls, eps: float, p: float, c: float | None = None) -> "FourierSketch":
        return cls(p=p, K=fourier_order(eps, p, c))

    def ingest(self, row, weight: float = 1.0) -> "FourierSketch":
        """Takes an angle or a 2-vector; a vector's norm enters as |a|^p in the weight."""
        row = np.asarray(row, dtype=np.float64).reshape(-1)
        if len(row) == 1:
            theta, mass = float(row[0]), weight
        elif len(row) == 2:
            theta, mass = float(np.arctan2(row[1], row[0])), weight * float(np.linalg.norm(row)) ** self.p
        else:
            raise UnsupportedError(f"the Fourier sketch is only defined for d = 2, got d = {len(row)}")
        k = np.arange(self.K + 1)
        self.cos_moments += mass * np.cos(k * theta)
        self.sin_moments += mass * np.sin(k * theta)
        return self

    def query(self, x) -> float | np.ndarray:
        """Estimate at an angle, a 2-vector, or a (k, 2) batch of vectors."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0 or x.shape == (1,):
            theta, scale = np.atleast_1d(x.reshape(-1)[0]), np.ones(1)
        else:
            X = np.atleast_2d(x)
            if X.shape[1] != 2:
                raise UnsupportedError(f"the Fourier sketch is only defined for d = 2, got d = {X.shape[1]}")
            theta, scale = np.arctan2(X[:, 1], X[:, 0]), np.linalg.norm(X, axis=1) ** self.p
        k = np.arange(self.K + 1)
        factor = np.where(k == 0, 1.0, 2.0) * self.lambdas
        series = (np.cos(np.outer(theta, k)) * self.cos_moments + np.sin(np.outer(theta, k)) * self.sin_moments) @ factor
        out = series * scale
        return float(out[0]) if x.ndim <= 1 else out

    def __add__(self, other: "FourierSketch") -> "FourierSketch":
        if (self.p, self.K) != (other.p, other.K):
            raise DimensionMismatchError("Fourier sketches of different p or K cannot be merged")
        merged = FourierSketch(p=self.p, K=self.K)
        merged.cos_moments = self.cos_moments + other.cos_moments
        merged.sin_moments = self.sin_moments + other.sin_moments
        return merged


def fourier_ingest(F: FourierSketch, row, weight: float = 1.0) -> FourierSketch:
    return F.ingest(row, weight)


def fourier_query(F: FourierSketch, x) -> float | np.ndarray:
    return F.query(x)
