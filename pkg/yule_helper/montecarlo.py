"""
Path simulation of the four process families and Monte Carlo estimates of rho.

Transitions are exact Gaussian ones, so the only discretisation left is the trapezoid rule in
the time integrals Y_ij. Paths are produced in fixed blocks, block b drawing from its own Philox
stream keyed by (seed, b); results do not depend on the number of worker threads.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import pandas as pd
from scipy import stats
from scipy.signal import lfilter

from yule_helper.moments import MomentResult
from yule_helper.yule_config import (
    CLT_T_GRID,
    JACKKNIFE_BLOCKS,
    MAX_MOMENT_ORDER,
    MC_BLOCK_ELEMENTS,
    MC_BLOCK_PATHS,
    MC_STEPS,
    RHO_GUARD,
    worker_count,
)
from yule_helper.yule_errors import InvalidParameterError
from yule_helper.yule_models import ProcessKind, ProcessSpec, Route, SimConfig

logger = logging.getLogger(__name__)


@dataclass
class RhoSample:
    rho: np.ndarray
    y11: np.ndarray
    y12: np.ndarray
    y22: np.ndarray
    cross: np.ndarray
    accepted: np.ndarray

    @property
    def n_rejected(self) -> int:
        return int(np.size(self.accepted) - np.count_nonzero(self.accepted))


def simulate_paths(spec: ProcessSpec, n_paths: int, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """(n_paths, n_steps + 1, 2) paths on a uniform grid of [0, T], all starting at 0."""
    dt = spec.T / n_steps
    xi = rng.standard_normal((n_paths, n_steps, 2))
    if spec.kind is ProcessKind.OU:
        r = spec.r
        decay = math.exp(-r * dt)
        scale = math.sqrt(-math.expm1(-2.0 * r * dt) / (2.0 * r))
        body = lfilter([scale], [1.0, -decay], xi, axis=1)
    else:
        body = np.cumsum(xi * math.sqrt(dt), axis=1)
    paths = np.concatenate([np.zeros((n_paths, 1, 2)), body], axis=1)

    if spec.kind is ProcessKind.BB:
        t = np.linspace(0.0, spec.T, n_steps + 1)
        paths = paths - (t / spec.T)[None, :, None] * paths[:, -1:, :]
    elif spec.kind is ProcessKind.CBM:
        c = spec.c
        paths[..., 1] = c * paths[..., 0] + math.sqrt(1.0 - c * c) * paths[..., 1]
    return paths


def simulate_path(spec: ProcessSpec, n_steps: int, rng: np.random.Generator) -> np.ndarray:
    if n_steps < 1:
        raise InvalidParameterError(f"a path needs at least one step, got {n_steps}")
    return simulate_paths(spec, 1, n_steps, rng)[0]


def steps_for_horizon(T: float, steps_per_unit: int = MC_STEPS) -> int:
    """Grid size keeping the per-unit-time resolution of steps_per_unit at horizon T."""
    return max(2, int(round(steps_per_unit * T)))


def trapezoid_weights(n_steps: int, T: float) -> np.ndarray:
    w = np.full(n_steps + 1, T / n_steps)
    w[0] = w[-1] = 0.5 * T / n_steps
    return w


def rho_of_paths(paths: np.ndarray, T: float = 1.0) -> RhoSample:
    w = trapezoid_weights(paths.shape[1] - 1, T)
    mean = np.einsum("j,pjc->pc", w, paths) / T
    centred = paths - mean[:, None, :]
    x1, x2 = centred[..., 0], centred[..., 1]
    y11 = np.einsum("j,pj,pj->p", w, x1, x1)
    y12 = np.einsum("j,pj,pj->p", w, x1, x2)
    y22 = np.einsum("j,pj,pj->p", w, x2, x2)
    cross = np.einsum("j,pj,pj->p", w, paths[..., 0], paths[..., 1])

    accepted = (y11 > 0.0) & (y22 > 0.0)
    denom = np.sqrt(np.where(accepted, y11 * y22, 1.0))
    rho = np.where(accepted, y12 / denom, np.nan)
    if np.any(np.abs(rho[accepted]) > 1.0 + RHO_GUARD):
        logger.warning("|rho| exceeded 1 beyond rounding; clipping")
    rho = np.clip(rho, -1.0, 1.0)
    return RhoSample(rho=rho, y11=y11, y12=y12, y22=y22, cross=cross, accepted=accepted)


def rho_of_path(path: np.ndarray, T: float = 1.0) -> RhoSample:
    """Single path (n_steps + 1, 2); a degenerate path comes back with accepted = False."""
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[0] < 2 or path.shape[1] != 2:
        raise InvalidParameterError("a path needs at least 2 grid points of 2 components")
    return rho_of_paths(path[None], T)


def _block_size(n_steps: int) -> int:
    return max(1, min(MC_BLOCK_PATHS, MC_BLOCK_ELEMENTS // (n_steps + 1)))


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def sample_rho(cfg: SimConfig) -> RhoSample:
    size = _block_size(cfg.n_steps)
    n_blocks = -(-cfg.n_paths // size)

    def _run(b: int) -> RhoSample:
        count = min(size, cfg.n_paths - b * size)
        paths = simulate_paths(cfg.spec, count, cfg.n_steps, block_rng(cfg.seed, b))
        if b % 100 == 0:
            logger.debug(f"block {b}/{n_blocks} ({count} paths)")
        return rho_of_paths(paths, cfg.spec.T)

    workers = min(worker_count(), n_blocks)
    if workers <= 1:
        parts = [_run(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run, range(n_blocks)))

    sample = RhoSample(*(np.concatenate([getattr(p, name) for p in parts])
                         for name in ("rho", "y11", "y12", "y22", "cross", "accepted")))
    if sample.n_rejected:
        logger.warning(f"{sample.n_rejected} degenerate paths rejected out of {cfg.n_paths}")
    logger.info(f"simulated {cfg.n_paths} paths of {cfg.spec.label} with {cfg.n_steps} steps")
    return sample


def jackknife(values, statistic: Callable = np.mean, n_blocks: int = JACKKNIFE_BLOCKS) -> tuple[float, float]:
    """Delete-a-block jackknife: (statistic on all values, standard error)."""
    values = np.asarray(values)
    n_blocks = min(n_blocks, len(values))
    estimate = float(statistic(values))
    if n_blocks < 2:
        return estimate, float("nan")
    blocks = np.array_split(np.arange(len(values)), n_blocks)
    leave_out = np.array([statistic(np.delete(values, idx, axis=0)) for idx in blocks])
    spread = np.sum((leave_out - leave_out.mean()) ** 2)
    return estimate, float(math.sqrt((n_blocks - 1) / n_blocks * spread))


def _check_orders(orders: Iterable[int]) -> list[int]:
    orders = list(orders)
    bad = [k for k in orders if not 1 <= k <= MAX_MOMENT_ORDER]
    if bad:
        raise InvalidParameterError(f"moment orders must lie in 1..{MAX_MOMENT_ORDER}, got {bad}")
    return orders


def moments_from_sample(sample: RhoSample, orders: Iterable[int]) -> list[MomentResult]:
    rho = sample.rho[sample.accepted]
    results = []
    for k in _check_orders(orders):
        estimate, se = jackknife(rho ** k)
        results.append(MomentResult(k=k, value=estimate, err_estimate=se, route=Route.MONTE_CARLO))
    return results


def estimate_moments(cfg: SimConfig, orders: Iterable[int]) -> list[MomentResult]:
    orders = _check_orders(orders)
    return moments_from_sample(sample_rho(cfg), orders)


def _sample_variance(x: np.ndarray) -> float:
    return float(np.var(x, ddof=1))


def clt_experiment(r: float, T_grid: Iterable[float] = CLT_T_GRID, n_paths: int = 100_000, seed: int = 0,
                   steps_per_unit: int = MC_STEPS) -> pd.DataFrame:
    """
    Large-T behaviour of two independent OU processes.

    Reference limits follow from the stationary covariance e^{-r|u|}/(2r):
    Var(T^{-1/2} int X1 X2) -> 1/(4 r^3), T^{-1} Y11 -> 1/(2r), Var(sqrt(T) rho) -> 1/r.
    """
    T_grid = [float(T) for T in T_grid]
    if not r > 0:
        raise InvalidParameterError(f"the CLT experiment needs r > 0, got {r}")
    if not T_grid or any(b <= a for a, b in zip(T_grid, T_grid[1:])):
        raise InvalidParameterError("T values must be increasing")

    limit = 1.0 / r
    limit_cross = 1.0 / (4.0 * r ** 3)
    rows = []
    for T in T_grid:
        spec = ProcessSpec(kind=ProcessKind.OU, r=r, T=T)
        n_steps = steps_for_horizon(T, steps_per_unit)
        sample = sample_rho(SimConfig(spec=spec, n_paths=n_paths, n_steps=n_steps, seed=seed))
        keep = sample.accepted
        scaled = math.sqrt(T) * sample.rho[keep]
        var, var_se = jackknife(scaled, _sample_variance)
        var_cross, var_cross_se = jackknife(sample.cross[keep] / math.sqrt(T), _sample_variance)
        y11_mean, y11_se = jackknife(sample.y11[keep] / T)
        rho_mean, rho_se = jackknife(sample.rho[keep])
        ks = stats.kstest(scaled / math.sqrt(limit), "norm")
        rows.append({
            "T": T,
            "n_steps": n_steps,
            "var_sqrt_t_rho": var,
            "var_sqrt_t_rho_se": var_se,
            "var_cross": var_cross,
            "var_cross_se": var_cross_se,
            "mean_y11_over_t": y11_mean,
            "mean_y11_over_t_se": y11_se,
            "mean_rho": rho_mean,
            "mean_rho_se": rho_se,
            "ks_distance": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue),
            "limit_sqrt_t_rho": limit,
            "limit_cross": limit_cross,
            "var_gap": var - limit,
            "gap_slope": None,
        })
        logger.info(f"T={T:g}: Var(sqrt(T) rho) = {var:.4f} +- {var_se:.4f} (limit {limit:.4f})")

    for prev, row in zip(rows, rows[1:]):
        if prev["var_gap"] != 0 and row["var_gap"] != 0:
            row["gap_slope"] = math.log(abs(row["var_gap"]) / abs(prev["var_gap"])) / math.log(row["T"] / prev["T"])
    return pd.DataFrame(rows)
