"""
Moments of Yule's nonsense correlation from the joint generating function.

    E rho^k = (-1)^k / (2^k Gamma(k/2)^2) int int s11^(k/2-1) s22^(k/2-1) d^k phi/ds12^k (s11, 0, s22)

With u = sqrt(s11), v = sqrt(s22) and the k-th derivative read off an s12 jet this becomes

    E rho^k = (-1)^k k! 4 / (2^k Gamma(k/2)^2) int int (uv)^(k-1) c_k(u^2, v^2) du dv

which is integrated over the triangle {u < v} (mapped as u = v x) and its mirror.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
import pandas as pd
from numpy.polynomial.legendre import leggauss
from scipy.special import expit, gamma

from yule_helper.mgf import phi_s12_jet
from yule_helper.yule_config import (
    GL_V_BREAKS,
    GL_X_BREAKS,
    MAX_MOMENT_ORDER,
    NODE_CHUNK,
    QUADRATURE_MIN_LEVEL,
    TS_T_MAX,
    TS_V_BREAKS,
    worker_count,
)
from yule_helper.yule_errors import InvalidParameterError, QuadratureNonConvergenceError
from yule_helper.yule_models import ProcessKind, ProcessSpec, QuadratureConfig, QuadratureScheme, Route

logger = logging.getLogger(__name__)

DIAGONAL_GAP = 1e-4
G_SERIES_SWITCH = 0.1


@dataclass(frozen=True)
class MomentResult:
    k: int
    value: float
    err_estimate: float
    route: Route


# ---------------------------------------------------------------------------------------------
# node sets


def _gauss_legendre_rule(breaks: np.ndarray, n: int):
    t, w = leggauss(n)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (half * t + 0.5 * (hi + lo)).ravel()
    return nodes, 1.0 - nodes, (half * w).ravel()


def _tanh_sinh_unit(level: int):
    """Nodes of [0, 1] with their exact distance to 1."""
    h = 2.0 ** (2 - level)
    t = np.arange(-math.floor(TS_T_MAX / h), math.floor(TS_T_MAX / h) + 1) * h
    s = math.pi * np.sinh(t)
    x = expit(s)
    one_minus = expit(-s)
    weights = h * math.pi * np.cosh(t) * x * one_minus
    return x, one_minus, weights


def _tanh_sinh_rule(breaks: np.ndarray, level: int):
    x, _, w = _tanh_sinh_unit(level)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    nodes = (lo + (hi - lo) * x).ravel()
    return nodes, (hi - lo) * w


def _v_breaks(base: Iterable[float], v_max: float, T: float) -> np.ndarray:
    inner = [b / T for b in base if b / T < v_max]
    return np.array(inner + [v_max])


def triangle_nodes(scheme: QuadratureScheme, level: int, v_max: float, T: float = 1.0):
    """
    Nodes of {0 < u < v < v_max} as (u, v, v - u, weight), u = v x.

    The Jacobian v of the map is folded into the weights and no node lies on u = v.
    """
    if scheme is QuadratureScheme.GAUSS_LEGENDRE_PANELS:
        n = 2 * level + 2
        v, _, wv = _gauss_legendre_rule(_v_breaks(GL_V_BREAKS, v_max, T), n)
        x, gap_x, wx = _gauss_legendre_rule(np.array(GL_X_BREAKS), n)
    else:
        v, wv = _tanh_sinh_rule(_v_breaks(TS_V_BREAKS, v_max, T), level)
        v, wv = v.ravel(), wv.ravel()
        x, gap_x, wx = _tanh_sinh_unit(level)
    u = np.outer(v, x)
    gap = np.outer(v, gap_x)
    weight = np.outer(wv * v, wx)
    vv = np.broadcast_to(v[:, None], u.shape)
    return u.ravel(), np.array(vv).ravel(), gap.ravel(), weight.ravel()


def _evaluate(integrand: Callable, u: np.ndarray, v: np.ndarray, gap: np.ndarray) -> np.ndarray:
    chunks = [slice(i, i + NODE_CHUNK) for i in range(0, u.size, NODE_CHUNK)]
    workers = min(worker_count(), len(chunks))
    if workers <= 1:
        parts = [integrand(u[s], v[s], gap[s]) for s in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda s: integrand(u[s], v[s], gap[s]), chunks))
    return np.concatenate(parts)


def integrate_quadrant(integrand: Callable, k: int, cfg: QuadratureConfig, T: float = 1.0,
                       symmetric: bool = True) -> tuple[float, float, int]:
    """
    Refine until two successive levels agree to cfg.abs_tol.

    integrand(u, v, v - u) is integrated over {u < v}; for a symmetric integrand the mirror
    triangle is its copy, otherwise it is evaluated with the arguments swapped.
    Returns (value, last delta, level reached).
    """
    v_max = cfg.truncation / T
    previous = None
    delta = math.inf
    for level in range(QUADRATURE_MIN_LEVEL, cfg.max_level + 1):
        u, v, gap, weight = triangle_nodes(cfg.scheme, level, v_max, T)
        lower = np.sum(_evaluate(integrand, u, v, gap) * weight)
        if symmetric:
            value = 2.0 * lower
        else:
            upper = np.sum(_evaluate(lambda a, b, d: integrand(b, a, -d), u, v, gap) * weight)
            value = lower + upper
        logger.debug(f"E rho^{k}: level {level} ({u.size} nodes) -> {value:.12f}")
        if previous is not None:
            delta = abs(value - previous)
            if delta <= cfg.abs_tol:
                logger.info(f"E rho^{k}: converged at level {level}, delta {delta:.2e}")
                return float(value), float(delta), level
        previous = value
    raise QuadratureNonConvergenceError(k, cfg.max_level, delta)


# ---------------------------------------------------------------------------------------------
# jet route


def moment_prefactor(k: int) -> float:
    return (-1) ** k * math.factorial(k) * 4.0 / (2.0 ** k * gamma(0.5 * k) ** 2)


def moment_integrand(spec: ProcessSpec, k: int) -> Callable:
    factor = moment_prefactor(k)

    def _integrand(u, v, gap):
        jet = phi_s12_jet(spec, u * u, v * v, k)
        return factor * (u * v) ** (k - 1) * jet.coeffs[k]

    return _integrand


def _check_order(k: int):
    if not 1 <= k <= MAX_MOMENT_ORDER:
        raise InvalidParameterError(f"moment order must lie in 1..{MAX_MOMENT_ORDER}, got {k}")


def moment(spec: ProcessSpec, k: int, cfg: QuadratureConfig | None = None) -> MomentResult:
    cfg = cfg or QuadratureConfig()
    _check_order(k)
    if k % 2 == 1 and spec.symmetric:
        return MomentResult(k=k, value=0.0, err_estimate=0.0, route=Route.JET_QUADRATURE)

    logger.info(f"E rho^{k} for {spec.label} by {cfg.scheme.value}")
    fold = cfg.symmetry_fold and spec.exchangeable
    value, delta, _ = integrate_quadrant(moment_integrand(spec, k), k, cfg, T=spec.T, symmetric=fold)
    if abs(value) > 1.0:
        logger.warning(f"E rho^{k} = {value:.6f} lies outside [-1, 1]; tighten the tolerance")
    return MomentResult(k=k, value=value, err_estimate=delta, route=Route.JET_QUADRATURE)


def moment_table(spec: ProcessSpec, orders: Iterable[int], cfg: QuadratureConfig | None = None) -> list[MomentResult]:
    cfg = cfg or QuadratureConfig()
    return [moment(spec, k, cfg) for k in orders]


def mean_and_variance(spec: ProcessSpec, cfg: QuadratureConfig | None = None) -> tuple[float, float]:
    """(E rho, Var rho)."""
    mean = moment(spec, 1, cfg).value
    second = moment(spec, 2, cfg).value
    return mean, second - mean * mean


def parameter_sweep(kind: str | ProcessKind, values: Iterable[float], k: int = 2,
                    cfg: QuadratureConfig | None = None, T: float = 1.0) -> pd.DataFrame:
    """E rho^k across an r-grid (ou) or, for cbm, mean, second moment and spread across a c-grid."""
    kind = ProcessKind(kind)
    cfg = cfg or QuadratureConfig()
    rows = []
    if kind is ProcessKind.OU:
        for r in values:
            result = moment(ProcessSpec(kind=kind, r=r, T=T), k, cfg)
            rows.append({"r": r, f"m{k}": result.value, "err_estimate": result.err_estimate})
    elif kind is ProcessKind.CBM:
        for c in values:
            spec = ProcessSpec(kind=kind, c=c, T=T)
            first = moment(spec, 1, cfg)
            second = moment(spec, 2, cfg)
            variance = second.value - first.value ** 2
            row = {
                "c": c,
                "mean": first.value,
                "m2": second.value,
                "variance": variance,
                "std_dev": math.sqrt(max(variance, 0.0)),
                "err_estimate": max(first.err_estimate, second.err_estimate),
            }
            if k not in (1, 2):
                extra = moment(spec, k, cfg)
                row[f"m{k}"] = extra.value
                row["err_estimate"] = max(row["err_estimate"], extra.err_estimate)
            rows.append(row)
    else:
        raise InvalidParameterError(f"sweeps run over ou (r) or cbm (c), not {kind.value}")
    return pd.DataFrame(rows)


# ---------------------------------------------------------------------------------------------
# explicit second moment of the Brownian case


def _log_sinh(t: np.ndarray) -> np.ndarray:
    big = t > 1.0
    safe = np.where(big, t, 1.0)
    small = np.where(big, 1.0, t)
    return np.where(big, safe + np.log1p(-np.exp(-2.0 * safe)) - math.log(2.0), np.log(np.sinh(small)))


def _g(t: np.ndarray) -> np.ndarray:
    """(t coth t - 1) / t^2."""
    small = t < G_SERIES_SWITCH
    ts = np.where(small, t, 0.0)
    t2 = ts * ts
    series = 1.0 / 3.0 - t2 / 45.0 + 2.0 * t2 * t2 / 945.0 - t2 ** 3 / 4725.0
    tl = np.where(small, 1.0, t)
    closed = (tl / np.tanh(tl) - 1.0) / (tl * tl)
    return np.where(small, series, closed)


def _g_prime(t: np.ndarray) -> np.ndarray:
    small = t < G_SERIES_SWITCH
    ts = np.where(small, t, 0.0)
    series = -2.0 * ts / 45.0 + 8.0 * ts ** 3 / 945.0 - 6.0 * ts ** 5 / 4725.0
    tl = np.where(small, 1.0, t)
    closed = -1.0 / (np.sinh(np.minimum(tl, 350.0)) ** 2 * tl) - 1.0 / (np.tanh(tl) * tl * tl) + 2.0 / tl ** 3
    return np.where(small, series, closed)


def explicit_m2_integrand(u, v, gap=None):
    """
    uv sqrt(uv / (sinh u sinh v)) (g(u) - g(v)) / (v^2 - u^2) for 0 < u < v.

    Close to the diagonal the divided difference is replaced by -g'((u+v)/2)/(u+v).
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    gap = v - u if gap is None else np.asarray(gap, dtype=float)
    root = np.exp(0.5 * (np.log(u) + np.log(v) - _log_sinh(u) - _log_sinh(v)))
    near = np.abs(gap) < DIAGONAL_GAP * (1.0 + v)
    safe_gap = np.where(near, 1.0, gap)
    divided = np.where(near, -_g_prime(0.5 * (u + v)) / (u + v), (_g(u) - _g(v)) / (safe_gap * (u + v)))
    return u * v * root * divided


def moment2_explicit_bm(cfg: QuadratureConfig | None = None) -> MomentResult:
    cfg = cfg or QuadratureConfig()
    logger.info(f"E rho^2 for bm from the explicit integrand by {cfg.scheme.value}")
    # the explicit form already integrates one triangle only: halve the doubled value
    value, delta, _ = integrate_quadrant(explicit_m2_integrand, 2, cfg, T=1.0, symmetric=True)
    return MomentResult(k=2, value=0.5 * value, err_estimate=0.5 * delta, route=Route.EXPLICIT_M2)
