# experiments.py

"""
Empirical checks of the scaling laws: coreset size and error against eps and N, the
separation of packing halves against N, the decay of lambda_k and the SVM sketch size.
Every report is a pandas DataFrame with one row per grid point; the fitted and the
expected exponent are repeated on every row so a CSV export stands on its own.
"""

import asyncio
import logging
from typing import Callable

import numpy as np
import pandas as pd

from coreset_engine import build, coreset_target_size, evaluate, halving_step
from core_model import InputError, WeightedPointSet, exact_lp_power, query_net, sup_error_on_net
from harmonics_lab import (
    affine_lower_bound_exponent,
    affine_packing,
    affine_separation_delta,
    build_packing,
    lambda_table,
    lower_bound_exponent,
    separation_delta,
    symmetrize,
)
from settings import get_settings
from svm_pointquery import SvmDataset, exact_svm_objective, svm_build, svm_query

logger = logging.getLogger(__name__)

NET_RESOLUTION = 0.01
SVM_QUERIES = 200


def _fit(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    ok = (x > 0) & (y > 0)
    if ok.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
    return float(slope)


async def _fan_out(run: Callable[[int, object], dict], grid: list, seed: int) -> list[dict]:
    """Runs run(seed + i, grid[i]) for every grid point, at most settings.threads at a time."""
    semaphore = asyncio.Semaphore(get_settings().threads)

    async def one(i: int, point) -> dict:
        async with semaphore:
            row = await asyncio.to_thread(run, seed + i, point)
            logger.debug("grid point %d done: %s", i, row)
            return row

    return list(await asyncio.gather(*(one(i, point) for i, point in enumerate(grid))))


def run_grid(run: Callable[[int, object], dict], grid: list, seed: int) -> pd.DataFrame:
    return pd.DataFrame(asyncio.run(_fan_out(run, list(grid), seed)))


def circle_points(rng: np.random.Generator, n: int, d: int = 2) -> np.ndarray:
    """Uniform directions with norms uniform in [1/2, 1]."""
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.uniform(0.5, 1.0, (n, 1))


def coreset_scaling(
    d: int = 2, p: float = 1.0, eps_grid=(0.2, 0.1, 0.05, 0.025), n: int = 20_000, seed: int = 0
) -> pd.DataFrame:
    """Size and sup error of additive coresets of n points against 1/eps; expected size exponent 2(d-1)/(d+2p)."""

    def run(run_seed: int, eps: float) -> dict:
        rng = np.random.default_rng(run_seed)
        P = WeightedPointSet.from_rows(circle_points(np.random.default_rng(seed), n, d), p=p)
        sketch = build(P, eps, rng)
        error, _ = sup_error_on_net(P, lambda X: evaluate(sketch, X), NET_RESOLUTION, run_seed)
        return {
            "d": d, "p": p, "eps": eps, "n": n, "size": len(sketch), "target": coreset_target_size(d, p, eps),
            "rounds": sketch.rounds, "sup_error": error / P.total_weight,
        }

    report = run_grid(run, list(eps_grid), seed)
    report["fitted_exponent"] = _fit(1 / report["eps"], report["size"])
    report["expected_exponent"] = 2 * (d - 1) / (d + 2 * p)
    return report


def halving_error(d: int = 2, p: float = 1.0, n_grid=(2_000, 10_000, 50_000), seed: int = 0) -> pd.DataFrame:
    """Sup error of one halving round (normalized weights) against N; expected exponent -(d+2p)/(2(d-1))."""
    if p != int(p):
        raise InputError(f"halving needs an integer p, got {p}")

    def run(run_seed: int, n: int) -> dict:
        rng = np.random.default_rng(run_seed)
        P = WeightedPointSet.from_rows(circle_points(rng, n, d), np.full(n, 1.0 / n), p=p)
        step = halving_step(P, rng)
        directions = query_net(d, NET_RESOLUTION, run_seed)
        error = np.abs(exact_lp_power(step.result, directions) - exact_lp_power(P, directions)).max()
        return {"d": d, "p": p, "n": n, "kept": len(step.result), "groups": len(step.groups), "sup_error": float(error)}

    report = run_grid(run, list(n_grid), seed)
    report["fitted_exponent"] = _fit(report["n"], report["sup_error"])
    report["expected_exponent"] = -(d + 2 * p) / (2 * (d - 1))
    return report


def delta_scaling(
    d: int = 2,
    p: float = 1.0,
    n_grid=(100, 1_000, 10_000),
    seed: int = 0,
    affine: bool = False,
    direction_budget: int = 16_384,
) -> pd.DataFrame:
    """
    Separation of the two symmetrized halves of a cap packing of size N. With affine the
    packing lives on S^d and is pushed onto the hyperplane y_{d+1} = 1.
    """

    def run(run_seed: int, N: int) -> dict:
        if affine:
            A, B = affine_packing(d, N, p, seed=run_seed)
            delta = affine_separation_delta(
                A, B, p, alpha=1.0, beta=(4 / 3) ** (1 / p), direction_budget=direction_budget, seed=run_seed
            )
        else:
            packing = build_packing(d, N, seed=run_seed)
            A = symmetrize(packing.points[packing.subsets[0]])
            B = symmetrize(packing.points[packing.subsets[1]])
            delta = separation_delta(A, B, p, direction_budget=direction_budget, seed=run_seed)
        return {"d": d, "p": p, "N": N, "affine": affine, "points": len(A), "delta": delta}

    report = run_grid(run, list(n_grid), seed)
    report["fitted_exponent"] = _fit(report["N"], report["delta"])
    report["expected_exponent"] = affine_lower_bound_exponent(d, p) if affine else lower_bound_exponent(d, p)
    return report


def lambda_report(d: int = 3, p: float = 1.0, k_max: int = 200) -> pd.DataFrame:
    """lambda_k for k <= k_max with the decay slope fitted over even k in [k_max/2, k_max]; expected -(d/2+p)."""
    table = lambda_table(d, p, k_max)
    report = pd.DataFrame({"d": d, "p": p, "k": np.arange(k_max + 1), "lambda_k": table.values})
    report["converged"] = table.converged
    tail = report[(report["k"] >= k_max // 2) & (report["k"] % 2 == 0) & (report["k"] > 0)]
    even_p = float(p).is_integer() and int(p) % 2 == 0
    report["fitted_exponent"] = float("nan") if even_p else _fit(tail["k"], tail["lambda_k"].abs())
    report["expected_exponent"] = -(d / 2 + p)
    return report


def svm_scaling(d: int = 2, eps_grid=(0.2, 0.1, 0.05), n: int = 20_000, seed: int = 0) -> pd.DataFrame:
    """SVM sketch size and max additive error on random (theta, b) in the unit ball; expected size exponent 2d/(d+3)."""
    rng = np.random.default_rng(seed)
    X = circle_points(rng, n, d)
    normal = rng.standard_normal(d)
    labels = np.where(X @ normal + 0.2 * rng.standard_normal(n) >= 0, 1, -1)
    data = SvmDataset.from_rows(X, labels)
    g = rng.standard_normal((SVM_QUERIES, d + 1))
    queries = g / np.linalg.norm(g, axis=1, keepdims=True) * rng.uniform(0, 1, (SVM_QUERIES, 1)) ** (1 / (d + 1))
    exact = np.array([exact_svm_objective(data, q[:d], q[d]) for q in queries])

    def run(run_seed: int, eps: float) -> dict:
        S = svm_build(data, eps, np.random.default_rng(run_seed))
        estimates = np.array([svm_query(S, q[:d], q[d]) for q in queries])
        return {
            "d": d, "eps": eps, "n": n, "size": S.size, "presample": S.presample,
            "max_error": float(np.abs(estimates - exact).max()),
        }

    report = run_grid(run, list(eps_grid), seed)
    report["fitted_exponent"] = _fit(1 / report["eps"], report["size"])
    report["expected_exponent"] = 2 * d / (d + 3)
    return report


EXPERIMENTS: dict[str, Callable[..., pd.DataFrame]] = {
    "coreset-scaling": coreset_scaling,
    "halving-error": halving_error,
    "delta-scaling": delta_scaling,
    "lambda": lambda_report,
    "svm-scaling": svm_scaling,
}


def run_experiment(name: str, **kwargs) -> pd.DataFrame:
    if name not in EXPERIMENTS:
        raise InputError(f"unknown experiment {name!r}, expected one of {sorted(EXPERIMENTS)}")
    report = EXPERIMENTS[name](**kwargs)
    logger.info("experiment %s: %d rows", name, len(report))
    return report
