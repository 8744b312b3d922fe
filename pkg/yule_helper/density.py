"""Moment-matched polynomial densities of rho on [-1, 1]."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.polynomial import legendre
from numpy.polynomial import polynomial

from yule_helper.moments import moment_table
from yule_helper.yule_config import DENSITY_POINTS, FLAT_INTERVAL, MAX_MOMENT_ORDER
from yule_helper.yule_errors import InvalidParameterError
from yule_helper.yule_models import ProcessSpec, QuadratureConfig

logger = logging.getLogger(__name__)

MOMENT_SLACK = 1e-12


@dataclass(frozen=True)
class DensityPoly:
    """a_0 + a_1 x + ... + a_k x^k on [-1, 1]."""

    coeffs: np.ndarray
    order: int

    def __call__(self, x):
        return eval_density(self, x)


def _check_moments(moments) -> np.ndarray:
    mu = np.asarray(moments, dtype=float)
    if mu.ndim != 1 or mu.size == 0:
        raise InvalidParameterError("density fitting needs the moment sequence E rho^0..E rho^k")
    if mu.size - 1 > MAX_MOMENT_ORDER:
        raise InvalidParameterError(f"density order must be <= {MAX_MOMENT_ORDER}, got {mu.size - 1}")
    if not np.all(np.isfinite(mu)):
        raise InvalidParameterError("moments must be finite")
    if abs(mu[0] - 1.0) > MOMENT_SLACK:
        raise InvalidParameterError(f"the zeroth moment must be 1, got {mu[0]}")
    if np.any(np.abs(mu) > 1.0 + MOMENT_SLACK):
        raise InvalidParameterError("moments of a variable on [-1, 1] cannot exceed 1 in magnitude")
    return mu


def _monomial_gram(size: int) -> np.ndarray:
    i = np.arange(size)
    total = i[:, None] + i[None, :]
    return (1.0 + (-1.0) ** total) / (total + 1.0)


def _finish(coeffs: np.ndarray, mu: np.ndarray) -> DensityPoly:
    order = mu.size - 1
    out = np.zeros(order + 1)
    out[:coeffs.size] = coeffs[:order + 1]
    if order >= 1 and np.all(mu[1::2] == 0.0):
        out[1::2] = 0.0
    return DensityPoly(coeffs=out, order=order)


def fit_density(moments) -> DensityPoly:
    """
    Degree-k polynomial whose first k+1 moments on [-1, 1] equal ``moments``.

    In the Legendre basis the coefficient of P_n is (2n+1)/2 * int p P_n, which only involves
    moments up to n, so the map is triangular.
    """
    mu = _check_moments(moments)
    order = mu.size - 1
    leg = np.zeros(order + 1)
    for n in range(order + 1):
        basis = np.zeros(n + 1)
        basis[n] = 1.0
        pn = legendre.leg2poly(basis)
        leg[n] = 0.5 * (2 * n + 1) * np.dot(pn, mu[:n + 1])
    return _finish(legendre.leg2poly(leg), mu)


def fit_density_normal_equations(moments) -> DensityPoly:
    """Same polynomial from the monomial Gram (Hankel) system; a cross-check only."""
    mu = _check_moments(moments)
    return _finish(np.linalg.solve(_monomial_gram(mu.size), mu), mu)


def eval_density(p: DensityPoly, x):
    return polynomial.polyval(np.asarray(x, dtype=float), p.coeffs)


def density_moments(p: DensityPoly, k: int | None = None) -> np.ndarray:
    """E rho^0..E rho^k of the polynomial, by exact monomial integration."""
    k = p.order if k is None else k
    return _monomial_gram(max(k, p.order) + 1)[:k + 1, :p.order + 1] @ p.coeffs


def emit_density_table(p: DensityPoly, n_points: int = DENSITY_POINTS) -> pd.DataFrame:
    if n_points < 2:
        raise InvalidParameterError("a density table needs at least 2 points")
    x = np.linspace(-1.0, 1.0, n_points)
    return pd.DataFrame({"x": x, "pdf": eval_density(p, x)})


def negativity(p: DensityPoly, n_points: int = DENSITY_POINTS) -> tuple[float, float]:
    """(minimum of p on the grid, fraction of grid points where p < 0)."""
    values = eval_density(p, np.linspace(-1.0, 1.0, n_points))
    return float(values.min()), float(np.mean(values < 0.0))


def flatness_ratio(p: DensityPoly, a: float = FLAT_INTERVAL[0], b: float = FLAT_INTERVAL[1], n_points: int = 201) -> float:
    values = eval_density(p, np.linspace(a, b, n_points))
    low = values.min()
    if low <= 0:
        return float("inf")
    return float(values.max() / low)


def check_density_order(spec: ProcessSpec, order: int):
    if not 0 <= order <= MAX_MOMENT_ORDER:
        raise InvalidParameterError(f"density order must lie in 0..{MAX_MOMENT_ORDER}, got {order}")
    if spec.symmetric and order % 2 == 1:
        raise InvalidParameterError(f"{spec.label} has a symmetric law; use an even density order")


def process_moments(spec: ProcessSpec, order: int, cfg: QuadratureConfig | None = None) -> np.ndarray:
    """[1, E rho, ..., E rho^order] from the jet route."""
    check_density_order(spec, order)
    results = moment_table(spec, range(1, order + 1), cfg)
    return np.array([1.0] + [r.value for r in results])


def fit_process_density(spec: ProcessSpec, order: int, cfg: QuadratureConfig | None = None) -> DensityPoly:
    p = fit_density(process_moments(spec, order, cfg))
    low, fraction = negativity(p)
    if fraction > 0:
        logger.warning(f"order-{order} density for {spec.label} dips to {low:.4f} on {fraction:.1%} of [-1, 1]")
    return p
