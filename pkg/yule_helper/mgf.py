"""
Generating functions of the centred quadratic functionals behind Yule's nonsense correlation.

psi(theta^2) = E exp(-theta^2/2 * int (X - Xbar)^2) for a single component, and
phi(S) = E exp(-1/2 (s11 Y11 + 2 s12 Y12 + s22 Y22)) for the pair. For the independent families
phi factorises into psi at the two eigenvalues of S; correlated Brownian motion is reduced to that
case by the Cholesky factor of its correlation matrix.

All psi are written through four entire kernels of z,
    S(z) = sinh(sqrt z)/sqrt z, C1(z) = (cosh(sqrt z) - 1)/z,
    S1(z) = (sinh(sqrt z) - sqrt z)/z^(3/2), E(z) = (S - 2 C1)/z,
so theta^2 = 0 and eta = 0 are regular points and the same code runs over floats and jets.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Any

import numpy as np
from scipy.optimize import brentq
from scipy.special import comb, gammaln

from yule_helper.jet import Jet, jet_compose_series, jet_const, jet_exp, jet_log, jet_merge, jet_sqrt, jet_variable
from yule_helper.yule_config import DIRECT_ROUTE_RATIO, KERNEL_SERIES_EXTRA_TERMS, KERNEL_SERIES_SWITCH, SERIES_TAIL_TOL
from yule_helper.yule_errors import InvalidParameterError, JetSingularityError
from yule_helper.yule_models import ProcessKind, ProcessSpec

logger = logging.getLogger(__name__)

NEGATIVE_SLACK = 1e-10
ROOT_SCAN_START = 0.5
ROOT_SCAN_STEP = 0.01


@dataclass(frozen=True)
class SymMatrix2:
    s11: Any
    s12: Any
    s22: Any

    @property
    def trace(self):
        return self.s11 + self.s22

    @property
    def det(self):
        return self.s11 * self.s22 - self.s12 * self.s12

    def has_jets(self) -> bool:
        return any(isinstance(x, Jet) for x in (self.s11, self.s12, self.s22))


def _scalar(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _exp(x):
    return jet_exp(x) if isinstance(x, Jet) else _scalar(np.exp(x))


# ---------------------------------------------------------------------------------------------
# kernels


def _kernel_series(name: str, n_terms: int) -> np.ndarray:
    n = np.arange(n_terms)
    if name == "S":
        return np.exp(-gammaln(2 * n + 2))
    if name == "C1":
        return np.exp(-gammaln(2 * n + 3))
    if name == "S1":
        return np.exp(-gammaln(2 * n + 4))
    if name == "E":
        return 2.0 * (n + 1) * np.exp(-gammaln(2 * n + 5))
    raise ValueError(f"unknown kernel {name}")


def _log_kernel_scaled(z: Jet, weights: dict[str, float]) -> Jet:
    # every kernel is multiplied by e^{-sqrt z}; the log adds sqrt z back
    x = jet_sqrt(z)
    f = jet_exp(-x)
    one_minus_e = 1.0 - f * f
    s = one_minus_e / (x * 2.0)
    terms = {"S": s}
    if "C1" in weights or "E" in weights:
        one_minus_f = 1.0 - f
        terms["C1"] = one_minus_f * one_minus_f / (z * 2.0)
    if "S1" in weights:
        terms["S1"] = (one_minus_e * 0.5 - x * f) / (x * z)
    if "E" in weights:
        terms["E"] = (s - terms["C1"] * 2.0) / z
    combo = sum(terms[name] * w for name, w in weights.items())
    return x + jet_log(combo)


def _log_kernel(z: Jet, weights: dict[str, float]) -> Jet:
    """log of sum_k w_k K_k(z) on a flat batch."""
    small = z.coeffs[0] < KERNEL_SERIES_SWITCH
    series_part = closed_part = None
    if small.any():
        n_terms = z.order + KERNEL_SERIES_EXTRA_TERMS
        series = sum(w * _kernel_series(name, n_terms) for name, w in weights.items())
        series_part = jet_log(jet_compose_series(series, z[small]))
    if (~small).any():
        closed_part = _log_kernel_scaled(z[~small], weights)
    return jet_merge(small, series_part, closed_part, z.order)


def _kernel_problem(spec: ProcessSpec, theta_sq: Jet):
    """(z, kernel weights, additive offset, power) with log psi = offset - power * log K(z)."""
    T = spec.T
    if spec.kind is ProcessKind.BB:
        return theta_sq * 0.25, {"S": 1.0}, 0.0, 1.0
    if spec.kind is ProcessKind.OU:
        a = spec.r * T
        weights = {"S": 1.0, "C1": 2 * a + a * a, "E": a ** 3, "S1": -a * a}
        return (theta_sq + spec.r ** 2) * T ** 2, weights, 0.5 * a, 0.5
    return theta_sq * T ** 2, {"S": 1.0}, 0.0, 0.5


def log_psi(spec: ProcessSpec, theta_sq):
    """
    log psi(theta^2) for the process family of ``spec`` (cbm uses the Brownian kernel).

    Accepts floats, arrays or (batched) jets and returns the same kind.
    """
    is_jet = isinstance(theta_sq, Jet)
    x = theta_sq if is_jet else jet_const(theta_sq, 0)
    shape = x.batch_shape
    flat = Jet(np.array(x.coeffs.reshape(x.order + 1, -1)))
    base = flat.coeffs[0]
    if not np.all(np.isfinite(flat.coeffs)):
        raise InvalidParameterError("psi needs a finite argument")
    if np.any(base < -NEGATIVE_SLACK * (1.0 + np.abs(base))):
        raise InvalidParameterError(f"psi needs theta^2 >= 0, got {base.min():.3e}")
    flat.coeffs[0] = np.maximum(base, 0.0)

    z, weights, offset, power = _kernel_problem(spec, flat)
    out = _log_kernel(z, weights) * (-power) + offset
    out = Jet(out.coeffs.reshape((out.order + 1,) + shape))
    return out if is_jet else _scalar(out.value)


def psi(spec: ProcessSpec, theta_sq):
    return _exp(log_psi(spec, theta_sq))


def psi_bm(theta_sq, T: float = 1.0):
    """(theta T / sinh theta T)^(1/2)."""
    return psi(ProcessSpec(kind=ProcessKind.BM, T=T), theta_sq)


def psi_ou(theta_sq, r: float, T: float = 1.0):
    return psi(ProcessSpec(kind=ProcessKind.OU, r=r, T=T), theta_sq)


def psi_bb(theta_sq):
    """theta / (2 sinh(theta/2))."""
    return psi(ProcessSpec(kind=ProcessKind.BB), theta_sq)


# ---------------------------------------------------------------------------------------------
# singularities of log psi


def _ou_kernel_on_negative_axis(omega, a: float):
    omega = np.asarray(omega, dtype=float)
    w2 = omega * omega
    s = np.sin(omega) / omega
    c1 = (1.0 - np.cos(omega)) / w2
    s1 = (omega - np.sin(omega)) / (omega * w2)
    e = (s - 2.0 * c1) / (-w2)
    return s + (2 * a + a * a) * c1 + a ** 3 * e - a * a * s1


@lru_cache(maxsize=None)
def singularity_abscissa(spec: ProcessSpec) -> float:
    """
    y* > 0 such that the nearest zero of 1/psi sits at theta^2 = -y*.

    psi is a Laplace transform of a Gaussian quadratic form, so its zeros are all on the
    negative real axis and m0 + y* is the radius of convergence of log psi around m0 >= 0.
    """
    if spec.kind is ProcessKind.BB:
        return 4.0 * math.pi ** 2
    if spec.kind is not ProcessKind.OU:
        return (math.pi / spec.T) ** 2

    a = spec.r * spec.T
    grid = np.arange(ROOT_SCAN_START, 4.0 * math.pi, ROOT_SCAN_STEP)
    values = _ou_kernel_on_negative_axis(grid, a)
    change = np.nonzero(np.sign(values[:-1]) != np.sign(values[1:]))[0]
    if change.size == 0:
        logger.warning(f"no kernel root found below 4*pi for {spec.label}; falling back to pi")
        omega = math.pi
    else:
        i = int(change[0])
        omega = brentq(lambda w: float(_ou_kernel_on_negative_axis(w, a)), grid[i], grid[i + 1], xtol=1e-14)
    logger.debug(f"{spec.label}: first kernel root at omega = {omega:.12f}")
    return spec.r ** 2 + (omega / spec.T) ** 2


# ---------------------------------------------------------------------------------------------
# eigenvalues


def eigen_theta(S: SymMatrix2):
    """Eigenvalues (theta1^2 >= theta2^2) of S; the jet route needs an off-diagonal base point."""
    if S.has_jets():
        diff = S.s11 - S.s22
        disc = diff * diff + S.s12 * S.s12 * 4.0
        if not isinstance(disc, Jet):
            order = next(x.order for x in (S.s11, S.s12, S.s22) if isinstance(x, Jet))
            disc = jet_const(disc, order)
        if np.any(np.asarray(disc.value) <= 0):
            raise JetSingularityError("eigenvalue jets are not defined on the diagonal s11 = s22, s12 = 0")
        t1 = (S.s11 + S.s22) * 0.5 + jet_sqrt(disc) * 0.5
        return t1, S.det / t1

    s11, s12, s22 = (np.asarray(x, dtype=float) for x in (S.s11, S.s12, S.s22))
    t1 = 0.5 * (s11 + s22) + 0.5 * np.sqrt((s11 - s22) ** 2 + 4.0 * s12 ** 2)
    det = s11 * s22 - s12 ** 2
    positive = t1 > 0
    t2 = np.where(positive, det / np.where(positive, t1, 1.0), 0.0)
    return _scalar(t1), _scalar(t2)


def _correlated_transform(S: SymMatrix2, c: float) -> SymMatrix2:
    # sigma^T S sigma for sigma = [[1, 0], [c, s]], s = sqrt(1 - c^2)
    s = math.sqrt(1.0 - c * c)
    a11 = S.s11 + S.s12 * (2.0 * c) + S.s22 * (c * c)
    a12 = (S.s12 + S.s22 * c) * s
    a22 = S.s22 * (s * s)
    return SymMatrix2(a11, a12, a22)


def eigen_lambda(S: SymMatrix2, c: float):
    if not -1 < c < 1:
        raise InvalidParameterError(f"correlation must lie in (-1, 1), got {c}")
    return eigen_theta(_correlated_transform(S, c))


@lru_cache(maxsize=None)
def _psi_spec(spec: ProcessSpec) -> ProcessSpec:
    if spec.kind is ProcessKind.CBM:
        return ProcessSpec(kind=ProcessKind.BM, T=spec.T)
    return spec


def _transformed(spec: ProcessSpec, S: SymMatrix2) -> SymMatrix2:
    return _correlated_transform(S, spec.c) if spec.kind is ProcessKind.CBM else S


# ---------------------------------------------------------------------------------------------
# phi


def phi(spec: ProcessSpec, S: SymMatrix2):
    """Joint generating function of (Y11, Y12, Y22); jets in any entry take the hybrid route."""
    if S.has_jets():
        return jet_exp(_log_phi_jet(spec, S))
    t1, t2 = eigen_theta(_transformed(spec, S))
    base = _psi_spec(spec)
    return _scalar(np.exp(np.asarray(log_psi(base, t1)) + np.asarray(log_psi(base, t2))))


def phi_s12_jet(spec: ProcessSpec, s11, s22, order: int) -> Jet:
    """Taylor coefficients of phi(s11, eps, s22) in eps at eps = 0, batched over (s11, s22)."""
    s11 = np.asarray(s11, dtype=float)
    s22 = np.asarray(s22, dtype=float)
    eps = jet_variable(np.zeros(np.broadcast_shapes(s11.shape, s22.shape)), order)
    return phi(spec, SymMatrix2(s11, eps, s22))


def _flat_jet(x, order: int, shape: tuple) -> Jet:
    jet = x if isinstance(x, Jet) else jet_const(x, order)
    coeffs = jet.coeffs.reshape((order + 1,) + (1,) * (len(shape) - len(jet.batch_shape)) + jet.batch_shape)
    return Jet(np.array(np.broadcast_to(coeffs, (order + 1,) + shape).reshape(order + 1, -1)))


def _log_phi_jet(spec: ProcessSpec, S: SymMatrix2) -> Jet:
    order = next(x.order for x in (S.s11, S.s12, S.s22) if isinstance(x, Jet))
    a = _transformed(spec, S)
    entries = [a.s11, a.s12, a.s22]
    shape = np.broadcast_shapes(*[x.batch_shape if isinstance(x, Jet) else np.shape(x) for x in entries])
    a11, a12, a22 = (_flat_jet(x, order, shape) for x in entries)

    m = (a11 + a22) * 0.5
    d = (a11 - a22) * 0.5
    w = d * d + a12 * a12
    det = a11 * a22 - a12 * a12

    base = _psi_spec(spec)
    radius = m.value + singularity_abscissa(base)
    direct = np.sqrt(np.maximum(w.value, 0.0)) >= DIRECT_ROUTE_RATIO * radius

    direct_part = series_part = None
    if direct.any():
        direct_part = _log_phi_direct(base, m[direct], w[direct], det[direct])
    if (~direct).any():
        series_part = _log_phi_series(base, m[~direct], w[~direct], radius[~direct])
    out = jet_merge(direct, direct_part, series_part, order)
    return Jet(out.coeffs.reshape((order + 1,) + shape))


def _log_phi_direct(base: ProcessSpec, m: Jet, w: Jet, det: Jet) -> Jet:
    t1 = m + jet_sqrt(w)
    t2 = det / t1
    return log_psi(base, t1) + log_psi(base, t2)


def _log_phi_series(base: ProcessSpec, m: Jet, w: Jet, radius: np.ndarray) -> Jet:
    """
    h(m + q) + h(m - q) = 2 sum_n w^n sum_j h~_{2n+j} C(2n+j, j) delta^j, h = log psi.

    h~ are the Taylor coefficients of h at m0 in the variable scaled by the radius of
    convergence, delta = (m - m0)/radius and w is rescaled by radius^2, so every term is O(1)
    and the sum over n converges like (sqrt(w0)/radius)^(2n).
    """
    order = m.order
    ratio = np.sqrt(np.maximum(w.value, 0.0)) / radius
    worst = min(max(float(ratio.max()), 1e-3), DIRECT_ROUTE_RATIO)
    n_terms = order // 2 + int(math.ceil(math.log(SERIES_TAIL_TOL) / (2.0 * math.log(worst)))) + 4
    length = 2 * n_terms + order

    m0 = m.value
    h = log_psi(base, jet_variable(m0, length, scale=radius)).coeffs
    delta = (m - m0) * (1.0 / radius)
    w_hat = w * (1.0 / radius ** 2)
    shifted = bool(np.any(delta.coeffs[1:] != 0.0))

    total = jet_const(np.zeros_like(m0), order)
    for n in range(n_terms - 1, -1, -1):
        if shifted:
            p = jet_const(h[2 * n + order] * comb(2 * n + order, order), order)
            for j in range(order - 1, -1, -1):
                p = p * delta + h[2 * n + j] * comb(2 * n + j, j)
        else:
            p = h[2 * n]
        total = total * w_hat + p
    return total * 2.0
