# tensor_algebra.py

"""
Symmetric tensor powers in the compressed monomial basis.

A symmetric tensor of order p over R^d is stored by one coefficient per monomial
x^alpha with |alpha| = p, in graded lexicographic order (for d=2, p=2: x^2, xy, y^2).
Slots hold plain monomial values; multinomial factors are applied when a tensor is
paired with a direction, so that <x^(p), y^(p)> = <x, y>^p.
"""

import itertools
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial
from typing import Sequence

import numpy as np

from core_model import DimensionMismatchError, InputError


def symmetric_dimension(d: int, p: int) -> int:
    return comb(d + p - 1, p)


@lru_cache(maxsize=None)
def monomial_exponents(d: int, p: int) -> np.ndarray:
    """Exponent vectors alpha, |alpha| = p, one row per slot, graded lex order."""
    if d < 1 or p < 1:
        raise InputError(f"need d >= 1 and p >= 1, got d={d}, p={p}")
    rows = []
    for combo in itertools.combinations_with_replacement(range(d), p):
        rows.append(np.bincount(combo, minlength=d))
    exponents = np.array(rows, dtype=np.int64)
    exponents.setflags(write=False)
    return exponents


@lru_cache(maxsize=None)
def multinomial_coefficients(d: int, p: int) -> np.ndarray:
    exponents = monomial_exponents(d, p)
    coefficients = np.array(
        [factorial(p) / np.prod([factorial(int(a)) for a in alpha]) for alpha in exponents],
        dtype=np.float64,
    )
    coefficients.setflags(write=False)
    return coefficients


def _check_order(p) -> int:
    if int(p) != p or p < 1:
        raise InputError(f"tensor powers need an integer p >= 1, got {p}")
    return int(p)


def tensor_powers(X: np.ndarray, p: int) -> np.ndarray:
    """Row-wise tensor powers: an (n, d) matrix maps to (n, C(d+p-1, p)) monomial values."""
    p = _check_order(p)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    exponents = monomial_exponents(X.shape[1], p)
    # x^alpha = prod_i x_i^alpha_i; integer powers keep 0^0 = 1 exact
    return np.prod(X[:, None, :] ** exponents[None, :, :], axis=2)


@dataclass(frozen=True)
class SymTensor:
    d: int
    p: int
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != symmetric_dimension(self.d, self.p):
            raise InputError(
                f"expected {symmetric_dimension(self.d, self.p)} slots for d={self.d}, p={self.p}, "
                f"got {len(self.coeffs)}"
            )

    @classmethod
    def zeros(cls, d: int, p: int) -> "SymTensor":
        return cls(d=d, p=p, coeffs=np.zeros(symmetric_dimension(d, p)))

    def _check_shape(self, other: "SymTensor") -> None:
        if (self.d, self.p) != (other.d, other.p):
            raise DimensionMismatchError(
                f"tensor shapes differ: (d={self.d}, p={self.p}) vs (d={other.d}, p={other.p})"
            )

    def __add__(self, other: "SymTensor") -> "SymTensor":
        self._check_shape(other)
        return SymTensor(self.d, self.p, self.coeffs + other.coeffs)

    def scale(self, c: float) -> "SymTensor":
        return SymTensor(self.d, self.p, c * self.coeffs)


def tensor_power(x, p: int) -> SymTensor:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    p = _check_order(p)
    return SymTensor(d=len(x), p=p, coeffs=tensor_powers(x[None, :], p)[0])


def weighted_sum(tensors: Sequence[SymTensor], weights: Sequence[float]) -> SymTensor:
    if len(tensors) != len(weights):
        raise InputError(f"{len(tensors)} tensors but {len(weights)} weights")
    if not tensors:
        raise InputError("weighted_sum needs at least one tensor")
    first = tensors[0]
    for t in tensors[1:]:
        first._check_shape(t)
    coeffs = np.asarray(weights, dtype=np.float64) @ np.vstack([t.coeffs for t in tensors])
    return SymTensor(first.d, first.p, coeffs)


def apply_direction(S: SymTensor, x) -> float | np.ndarray:
    """
    sum_alpha multinomial(p; alpha) * S[alpha] * x^alpha. Equals sum_j w_j <y_j, x>^p when
    S is a weighted sum of tensor powers of the y_j. Accepts a (k, d) batch of directions.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != S.d:
        raise DimensionMismatchError(f"direction has dimension {x.shape[-1]}, tensor has d={S.d}")
    paired = S.coeffs * multinomial_coefficients(S.d, S.p)
    if x.ndim == 1:
        return float(tensor_powers(x[None, :], S.p)[0] @ paired)
    return tensor_powers(x, S.p) @ paired


def apply_directions(coeffs: np.ndarray, d: int, p: int, X: np.ndarray) -> np.ndarray:
    """Evaluates many stored tensors (rows of coeffs) at many directions: (m, D) x (k, d) -> (k, m)."""
    paired = np.asarray(coeffs) * multinomial_coefficients(d, p)[None, :]
    return tensor_powers(X, p) @ paired.T
