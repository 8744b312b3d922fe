"""
Truncated Taylor-series ("jet") arithmetic.

A Jet of order K stores the raw Taylor coefficients c_0..c_K of a function of one
perturbation variable eps, so the i-th derivative at eps = 0 is i! * c_i. Coefficients
may carry a trailing batch shape: ``coeffs`` has shape (K+1, *batch) and every operation
acts elementwise over the batch, which is how quadrature nodes are evaluated together.

Transcendental functions are propagated with the usual ODE recurrences
(exp: c' = c a', log: a l' = a', sinh/cosh jointly).
"""
from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from yule_helper.yule_errors import JetSingularityError

logger = logging.getLogger(__name__)

SINHC_SWITCH = 1e-3
SINHC_MIN_TERMS = 8
LOGSINH_SWITCH = 1.0


class Jet:
    __slots__ = ("coeffs",)
    # make ndarray (op) Jet defer to the Jet reflected operators
    __array_ufunc__ = None

    def __init__(self, coeffs):
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.ndim == 0:
            raise ValueError("a Jet needs at least the constant coefficient")
        self.coeffs = coeffs

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[1:]

    @property
    def value(self):
        return self.coeffs[0]

    def derivative(self, i: int):
        """i-th derivative in the perturbation variable at eps = 0."""
        return math.factorial(i) * self.coeffs[i]

    def truncate(self, order: int) -> "Jet":
        return Jet(self.coeffs[:order + 1])

    def __getitem__(self, index) -> "Jet":
        if not isinstance(index, tuple):
            index = (index,)
        return Jet(self.coeffs[(slice(None),) + index])

    def __repr__(self):
        return f"Jet(order={self.order}, coeffs={self.coeffs!r})"

    def __neg__(self):
        return jet_neg(self)

    def __add__(self, other):
        return jet_add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return jet_sub(self, other)

    def __rsub__(self, other):
        return jet_add(-self, other)

    def __mul__(self, other):
        return jet_mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return jet_div(self, other)

    def __rtruediv__(self, other):
        return jet_div(_lift(other, self), self)

    def __pow__(self, n: int):
        return jet_pow_int(self, n)


def jet_const(x, K: int) -> Jet:
    if K < 0:
        raise ValueError(f"jet order must be >= 0, got {K}")
    x = np.asarray(x, dtype=float)
    coeffs = np.zeros((K + 1,) + x.shape)
    coeffs[0] = x
    return Jet(coeffs)


def jet_variable(x, K: int, scale=1.0) -> Jet:
    """Seed eps -> x + scale * eps; scale rescales the perturbation variable."""
    if K < 1:
        raise ValueError("a variable jet needs order >= 1 for its derivative slot")
    jet = jet_const(x, K)
    jet.coeffs[1] = scale
    return jet


def _lift(x, like: Jet) -> Jet:
    if isinstance(x, Jet):
        if x.order != like.order:
            raise ValueError(f"jet orders differ: {x.order} vs {like.order}")
        return x
    return jet_const(x, like.order)


def _pad(coeffs: np.ndarray, batch_ndim: int) -> np.ndarray:
    # insert batch axes right after the coefficient axis so numpy aligns batch dims
    extra = batch_ndim - (coeffs.ndim - 1)
    if extra <= 0:
        return coeffs
    return coeffs.reshape((coeffs.shape[0],) + (1,) * extra + coeffs.shape[1:])


def _align(a: Jet, b) -> tuple[np.ndarray, np.ndarray]:
    other = b.coeffs if isinstance(b, Jet) else np.asarray(b, dtype=float)
    other_ndim = other.ndim - 1 if isinstance(b, Jet) else other.ndim
    ndim = max(len(a.batch_shape), other_ndim)
    if isinstance(b, Jet):
        other = _pad(other, ndim)
    return _pad(a.coeffs, ndim), other


def jet_add(a: Jet, b) -> Jet:
    if not isinstance(b, Jet):
        ac, b = _align(a, b)
        coeffs = np.array(np.broadcast_to(ac, (ac.shape[0],) + np.broadcast_shapes(ac.shape[1:], b.shape)))
        coeffs[0] = coeffs[0] + b
        return Jet(coeffs)
    ac, bc = _align(a, _lift(b, a))
    return Jet(ac + bc)


def jet_sub(a: Jet, b) -> Jet:
    if isinstance(b, Jet):
        return jet_add(a, -b)
    return jet_add(a, -np.asarray(b, dtype=float))


def jet_mul(a: Jet, b) -> Jet:
    ac, bc = _align(a, _lift(b, a) if isinstance(b, Jet) else b)
    if not isinstance(b, Jet):
        return Jet(ac * bc)
    K = a.order
    out = np.zeros((K + 1,) + np.broadcast_shapes(ac.shape[1:], bc.shape[1:]))
    for j in range(K + 1):
        out[j:] += ac[j] * bc[:K + 1 - j]
    return Jet(out)


def jet_div(a: Jet, b) -> Jet:
    if not isinstance(b, Jet):
        if np.any(np.asarray(b) == 0):
            raise JetSingularityError("division of a jet by zero")
        ac, bc = _align(a, b)
        return Jet(ac / bc)
    ac, bc = _align(a, _lift(b, a))
    b0 = bc[0]
    if np.any(b0 == 0):
        raise JetSingularityError("jet division by a series with zero constant term")
    K = a.order
    out = np.empty((K + 1,) + np.broadcast_shapes(ac.shape[1:], bc.shape[1:]))
    out[0] = ac[0] / b0
    for i in range(1, K + 1):
        acc = (bc[1:i + 1] * out[i - 1::-1]).sum(axis=0)
        out[i] = (ac[i] - acc) / b0
    return Jet(out)


def jet_sqrt(a: Jet) -> Jet:
    a0 = a.coeffs[0]
    if np.any(a0 <= 0):
        raise JetSingularityError("jet square root needs a positive constant term")
    K = a.order
    out = np.empty_like(a.coeffs)
    out[0] = np.sqrt(a0)
    for i in range(1, K + 1):
        acc = (out[1:i] * out[i - 1:0:-1]).sum(axis=0) if i > 1 else 0.0
        out[i] = (a.coeffs[i] - acc) / (2.0 * out[0])
    return Jet(out)


def jet_exp(a: Jet) -> Jet:
    K = a.order
    out = np.empty_like(a.coeffs)
    out[0] = np.exp(a.coeffs[0])
    weights = np.arange(K + 1, dtype=float).reshape((-1,) + (1,) * len(a.batch_shape))
    da = weights * a.coeffs
    for i in range(1, K + 1):
        out[i] = (da[1:i + 1] * out[i - 1::-1]).sum(axis=0) / i
    return Jet(out)


def jet_log(a: Jet) -> Jet:
    a0 = a.coeffs[0]
    if np.any(a0 <= 0):
        raise JetSingularityError("jet logarithm needs a positive constant term")
    K = a.order
    out = np.empty_like(a.coeffs)
    out[0] = np.log(a0)
    weights = np.arange(K + 1, dtype=float).reshape((-1,) + (1,) * len(a.batch_shape))
    for i in range(1, K + 1):
        acc = ((weights[1:i] * out[1:i]) * a.coeffs[i - 1:0:-1]).sum(axis=0) / i if i > 1 else 0.0
        out[i] = (a.coeffs[i] - acc) / a0
    return Jet(out)


def jet_sinh_cosh(a: Jet) -> tuple[Jet, Jet]:
    K = a.order
    s = np.empty_like(a.coeffs)
    c = np.empty_like(a.coeffs)
    s[0] = np.sinh(a.coeffs[0])
    c[0] = np.cosh(a.coeffs[0])
    weights = np.arange(K + 1, dtype=float).reshape((-1,) + (1,) * len(a.batch_shape))
    da = weights * a.coeffs
    for i in range(1, K + 1):
        s[i] = (da[1:i + 1] * c[i - 1::-1]).sum(axis=0) / i
        c[i] = (da[1:i + 1] * s[i - 1::-1]).sum(axis=0) / i
    return Jet(s), Jet(c)


def jet_sinh(a: Jet) -> Jet:
    return jet_sinh_cosh(a)[0]


def jet_cosh(a: Jet) -> Jet:
    return jet_sinh_cosh(a)[1]


def jet_pow_int(a: Jet, n: int) -> Jet:
    if n < 0:
        return jet_div(jet_const(np.ones(a.batch_shape), a.order), jet_pow_int(a, -n))
    result = jet_const(np.ones(a.batch_shape), a.order)
    base = a
    while n:
        if n & 1:
            result = jet_mul(result, base)
        n >>= 1
        if n:
            base = jet_mul(base, base)
    return result


def jet_neg(a: Jet) -> Jet:
    return Jet(-a.coeffs)


def jet_scale(a: Jet, factor) -> Jet:
    return jet_mul(a, factor)


def jet_horner(coeffs: Sequence[float], a: Jet) -> Jet:
    """Polynomial sum_n coeffs[n] * a**n evaluated by Horner's rule."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0:
        return jet_const(np.zeros(a.batch_shape), a.order)
    result = jet_const(np.full(a.batch_shape, coeffs[-1]), a.order)
    for coef in coeffs[-2::-1]:
        result = jet_add(jet_mul(result, a), coef)
    return result


def jet_compose_series(series: Sequence[float], a: Jet) -> Jet:
    """Power series composed with a jet, truncated after len(series) terms."""
    return jet_horner(series, a)


def jet_merge(mask, when_true: Jet | None, when_false: Jet | None, order: int) -> Jet:
    """Scatter two jets computed on complementary subsets of a batch back into one."""
    mask = np.asarray(mask, dtype=bool)
    coeffs = np.zeros((order + 1,) + mask.shape)
    if when_true is not None and mask.any():
        coeffs[:, mask] = when_true.coeffs
    if when_false is not None and (~mask).any():
        coeffs[:, ~mask] = when_false.coeffs
    return Jet(coeffs)


def _sinhc_series(n_terms: int) -> np.ndarray:
    n = np.arange(n_terms)
    return np.exp(-gammaln(2 * n + 2))


def sinhc_jet(a: Jet) -> Jet:
    """sinh(a)/a with the removable singularity at a = 0 handled by its even series."""
    small = np.abs(a.coeffs[0]) < SINHC_SWITCH
    n_terms = max(SINHC_MIN_TERMS, a.order // 2 + 2)
    series = None
    closed = None
    if small.any():
        sub = a[small] if a.batch_shape else a
        series = jet_compose_series(_sinhc_series(n_terms), jet_mul(sub, sub))
        if not a.batch_shape:
            return series
    if (~small).any():
        sub = a[~small] if a.batch_shape else a
        closed = jet_div(jet_sinh(sub), sub)
        if not a.batch_shape:
            return closed
    return jet_merge(small, series, closed, a.order)


def jet_logsinh(a: Jet) -> Jet:
    """log sinh(a) for a > 0, evaluated as a + log1p(-e^{-2a}) - log 2 once a is large."""
    a0 = np.asarray(a.coeffs[0])
    if np.any(a0 <= 0):
        raise JetSingularityError("log sinh needs a positive constant term")
    large = a0 >= LOGSINH_SWITCH

    def _large(x: Jet) -> Jet:
        tail = jet_add(-jet_exp(jet_mul(x, -2.0)), 1.0)
        return jet_add(jet_add(x, jet_log(tail)), -math.log(2.0))

    if not a.batch_shape:
        return _large(a) if large else jet_log(jet_sinh(a))
    big = _large(a[large]) if large.any() else None
    small = jet_log(jet_sinh(a[~large])) if (~large).any() else None
    return jet_merge(large, big, small, a.order)
