"""
Backward Riccati integration for linear diffusions dX = sigma dW + (B(t) X + delta) dt, X(0) = 0.

F(t, x) = E[exp(-1/2 int_t^T X.QX ds - int_t^T z.X ds) | X(t) = x] = exp(-1/2 x.Vx - b.x - gamma)
with V, b, gamma solving, backwards from V(T) = 0, b(T) = 0, gamma(T) = 0,

    V' = V Sigma V - (V B + B^T V) - Q
    b' = (V Sigma - B^T) b - V delta - z
    2 gamma' = b^T Sigma b - tr(V Sigma) - delta^T b.

Mixing the linear coefficient z over N(0, S/T) turns F(0, 0) into the generating function of the
centred quadratic functional, which makes this module an independent oracle for ``mgf.phi``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import quad

from yule_helper.mgf import SymMatrix2, phi
from yule_helper.yule_config import (
    BB_EPSILON,
    HERMITE_NODES,
    RICCATI_STEPS,
    VERIFY_DIAGONAL_VALUES,
    VERIFY_OFF_DIAGONAL_FRACTIONS,
    VERIFY_STEPS,
)
from yule_helper.yule_errors import InvalidParameterError, RiccatiError
from yule_helper.yule_models import ProcessKind, ProcessSpec

logger = logging.getLogger(__name__)

PSD_SLACK = 1e-10

# columns: 0, e1, -e1, e2, -e2, e1 + e2
QUADRATIC_PROBES = np.array([[0.0, 1.0, -1.0, 0.0, 0.0, 1.0],
                             [0.0, 0.0, 0.0, 1.0, -1.0, 1.0]])


def _zero_drift(t: float) -> np.ndarray:
    return np.zeros((2, 2))


@dataclass(frozen=True)
class LinearSDE:
    sigma: np.ndarray
    drift: Callable[[float], np.ndarray] = _zero_drift
    delta: np.ndarray = field(default_factory=lambda: np.zeros(2))
    T: float = 1.0
    singular_at_horizon: bool = False

    @property
    def Sigma(self) -> np.ndarray:
        return self.sigma @ self.sigma.T


@dataclass
class RiccatiState:
    V: np.ndarray
    b: np.ndarray
    gamma: np.ndarray | float
    t: float
    error_estimate: float | None = None
    times: np.ndarray | None = None
    V_path: np.ndarray | None = None


def linear_sde_for(spec: ProcessSpec) -> LinearSDE:
    if spec.kind is ProcessKind.BM:
        return LinearSDE(sigma=np.eye(2), T=spec.T)
    if spec.kind is ProcessKind.OU:
        rate = spec.r
        return LinearSDE(sigma=np.eye(2), drift=lambda t: -rate * np.eye(2), T=spec.T)
    if spec.kind is ProcessKind.BB:
        return LinearSDE(sigma=np.eye(2), drift=lambda t: -np.eye(2) / (1.0 - t), T=1.0, singular_at_horizon=True)
    c = spec.c
    sigma = np.array([[1.0, 0.0], [c, math.sqrt(1.0 - c * c)]])
    return LinearSDE(sigma=sigma, T=spec.T)


def whiten(sde: LinearSDE, Q: np.ndarray, z: np.ndarray):
    """Reduce to sigma = I through X = sigma Y; F is unchanged."""
    sigma = sde.sigma
    inverse = np.linalg.inv(sigma)
    drift = sde.drift
    whitened = LinearSDE(
        sigma=np.eye(2),
        drift=lambda t: inverse @ drift(t) @ sigma,
        delta=inverse @ sde.delta,
        T=sde.T,
        singular_at_horizon=sde.singular_at_horizon,
    )
    return whitened, sigma.T @ np.asarray(Q, dtype=float) @ sigma, sigma.T @ np.asarray(z, dtype=float)


def time_mesh(sde: LinearSDE, steps: int, epsilon: float = BB_EPSILON) -> np.ndarray:
    """Descending time nodes from the (truncated) horizon to 0."""
    if sde.singular_at_horizon:
        # geometric in time-to-go keeps step * |B(t)| bounded near the pole
        tau = np.geomspace(epsilon, sde.T, steps + 1)
        return sde.T - tau
    return np.linspace(sde.T, 0.0, steps + 1)


def _rhs(sde: LinearSDE, Sigma: np.ndarray, Q: np.ndarray, z: np.ndarray, t: float, V, b, g):
    B = sde.drift(t)
    delta = sde.delta
    VS = V @ Sigma
    dV = VS @ V - (V @ B + B.T @ V) - Q
    db = (VS - B.T) @ b - (V @ delta)[..., None] - z
    dg = 0.5 * (np.einsum("nip,ij,njp->np", b, Sigma, b)
                - np.trace(VS, axis1=-2, axis2=-1)[:, None]
                - np.einsum("i,nip->np", delta, b))
    return dV, db, dg


def _check_state(V: np.ndarray, b: np.ndarray, g: np.ndarray, t: float):
    if not (np.all(np.isfinite(V)) and np.all(np.isfinite(b)) and np.all(np.isfinite(g))):
        raise RiccatiError(f"Riccati state became nonfinite at t = {t:.6g}")
    trace = V[:, 0, 0] + V[:, 1, 1]
    det = V[:, 0, 0] * V[:, 1, 1] - V[:, 0, 1] * V[:, 1, 0]
    scale = 1.0 + trace * trace
    if np.any(trace < -PSD_SLACK) or np.any(det < -PSD_SLACK * scale):
        raise RiccatiError(f"V lost positive semidefiniteness at t = {t:.6g}; refine the mesh or check Q")


def _rk4(sde: LinearSDE, Q: np.ndarray, z: np.ndarray, mesh: np.ndarray, keep_path: bool = False):
    Sigma = sde.Sigma
    n, p = z.shape[0], z.shape[2]
    V = np.zeros((n, 2, 2))
    b = np.zeros((n, 2, p))
    g = np.zeros((n, p))
    path = [V.copy()] if keep_path else None

    for t0, t1 in zip(mesh[:-1], mesh[1:]):
        h = t1 - t0
        k1 = _rhs(sde, Sigma, Q, z, t0, V, b, g)
        k2 = _rhs(sde, Sigma, Q, z, t0 + 0.5 * h, V + 0.5 * h * k1[0], b + 0.5 * h * k1[1], g + 0.5 * h * k1[2])
        k3 = _rhs(sde, Sigma, Q, z, t0 + 0.5 * h, V + 0.5 * h * k2[0], b + 0.5 * h * k2[1], g + 0.5 * h * k2[2])
        k4 = _rhs(sde, Sigma, Q, z, t1, V + h * k3[0], b + h * k3[1], g + h * k3[2])
        V = V + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        b = b + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        g = g + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        V = 0.5 * (V + np.swapaxes(V, -1, -2))
        _check_state(V, b, g, t1)
        if keep_path:
            path.append(V.copy())

    return V, b, g, (np.stack(path) if keep_path else None)


def integrate_backward(sde: LinearSDE, Q, z, steps: int = RICCATI_STEPS, epsilon: float = BB_EPSILON,
                       estimate_error: bool = True, keep_path: bool = False) -> RiccatiState:
    """
    Fixed-step RK4 from the horizon back to t = 0.

    Q may be one 2x2 matrix or a stack (N, 2, 2); z may be a 2-vector, a set of probe columns
    (2, P) or a stack (N, 2, P). Results keep the caller's batch layout.
    """
    if steps < 2:
        raise InvalidParameterError("the Riccati integrator needs at least 2 steps")
    Q = np.asarray(Q, dtype=float)
    batched = Q.ndim == 3
    Qb = Q if batched else Q[None]
    n = Qb.shape[0]
    z = np.asarray(z, dtype=float)
    vector_z = z.ndim == 1
    if vector_z:
        zb = np.broadcast_to(z[None, :, None], (n, 2, 1))
    elif z.ndim == 2:
        zb = np.broadcast_to(z[None], (n,) + z.shape)
    else:
        zb = z

    mesh = time_mesh(sde, steps, epsilon)
    V, b, g, path = _rk4(sde, Qb, zb, mesh, keep_path)

    error = None
    if estimate_error and steps % 2 == 0:
        _, _, g_half, _ = _rk4(sde, Qb, zb, mesh[::2])
        error = float(np.max(np.abs(g - g_half))) / 15.0
        logger.debug(f"Riccati step-halving estimate {error:.3e} at {steps} steps")

    if vector_z:
        b, g = b[..., 0], g[..., 0]
    if not batched:
        V, b, g = V[0], b[0], g[0]
        if path is not None:
            path = path[:, 0]
    return RiccatiState(V=V, b=b, gamma=g if np.ndim(g) else float(g), t=float(mesh[-1]),
                        error_estimate=error, times=mesh if keep_path else None, V_path=path)


def _log_sinhc(x):
    """log(sinh x / x) for x >= 0."""
    x = np.asarray(x, dtype=float)
    small = x < 1.0
    near_x = np.where(small & (x > 1e-8), x, 1.0)
    near = np.where(x > 1e-8, np.log(np.sinh(near_x) / near_x), x * x / 6.0)
    far_x = np.where(small, 1.0, x)
    far = far_x + np.log1p(-np.exp(-2.0 * far_x)) - math.log(2.0) - np.log(far_x)
    return np.where(small, near, far)


def value_function_closed_form(spec: ProcessSpec, theta_sq: float, z: float, tau):
    """
    Scalar (V, b, gamma) at time-to-go tau for the unit-diffusion Bm, OU and Bb problems with
    Q = theta^2 and linear coefficient z.
    """
    if theta_sq <= 0:
        raise InvalidParameterError("closed-form value functions need theta^2 > 0")
    theta = math.sqrt(theta_sq)
    tau = np.asarray(tau, dtype=float)
    x = theta * tau

    if spec.kind is ProcessKind.BM:
        V = theta * np.tanh(x)
        b = z * np.tanh(x) / theta
        log_cosh = np.logaddexp(x, -x) - math.log(2.0)
        gamma = 0.5 * log_cosh - z * z / (2.0 * theta_sq) * (tau - np.tanh(x) / theta)
        return V, b, gamma

    if spec.kind is ProcessKind.BB:
        safe = np.where(tau > 0, tau, 1.0)
        V = np.where(tau > 0, theta / np.tanh(theta * safe) - 1.0 / safe, 0.0)
        b = z * np.tanh(0.5 * x) / theta
        gamma = 0.5 * _log_sinhc(x) - z * z / (2.0 * theta_sq) * (tau - 2.0 / theta * np.tanh(0.5 * x))
        return V, b, gamma

    if spec.kind is ProcessKind.OU:
        r = spec.r
        eta = math.sqrt(r * r + theta_sq)

        def _b(s):
            D = eta * np.cosh(eta * s) + r * np.sinh(eta * s)
            return z * (eta * np.sinh(eta * s) + r * (np.cosh(eta * s) - 1.0)) / (eta * D)

        D = eta * np.cosh(eta * tau) + r * np.sinh(eta * tau)
        V = theta_sq * np.sinh(eta * tau) / D
        b = _b(tau)
        energy = np.array([quad(lambda s: _b(s) ** 2, 0.0, float(t), epsabs=1e-14, epsrel=1e-12)[0]
                           for t in np.atleast_1d(tau)]).reshape(tau.shape)
        gamma = 0.5 * (np.log(D / eta) - r * tau) - 0.5 * energy
        return V, b, gamma

    raise InvalidParameterError(f"no scalar closed form for {spec.label}")


def _as_matrices(S: SymMatrix2) -> np.ndarray:
    s11, s12, s22 = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (S.s11, S.s12, S.s22)))
    out = np.empty(s11.shape + (2, 2))
    out[..., 0, 0] = s11
    out[..., 0, 1] = s12
    out[..., 1, 0] = s12
    out[..., 1, 1] = s22
    return out


def gamma_at(sde: LinearSDE, S, probes: np.ndarray, steps: int = RICCATI_STEPS, epsilon: float = BB_EPSILON) -> np.ndarray:
    """gamma(0; a) for every probe column a, with Q = S (stack (N, 2, 2) or SymMatrix2)."""
    Q = _as_matrices(S) if isinstance(S, SymMatrix2) else np.asarray(S, dtype=float)
    Q = Q.reshape(-1, 2, 2)
    probes = np.asarray(probes, dtype=float)
    state = integrate_backward(sde, Q, probes, steps=steps, epsilon=epsilon, estimate_error=False)
    return state.gamma


def gamma_quadratic_form(sde: LinearSDE, S, steps: int = RICCATI_STEPS, epsilon: float = BB_EPSILON):
    """
    gamma(0; a) = gamma0 + g.a + 1/2 a.G a, assembled exactly from six probes.

    Returns arrays of shape (N,), (N, 2) and (N, 2, 2) for N stacked matrices S.
    """
    gam = gamma_at(sde, S, QUADRATIC_PROBES, steps, epsilon)
    gamma0 = gam[:, 0]
    g = np.stack([0.5 * (gam[:, 1] - gam[:, 2]), 0.5 * (gam[:, 3] - gam[:, 4])], axis=-1)
    G11 = gam[:, 1] + gam[:, 2] - 2.0 * gamma0
    G22 = gam[:, 3] + gam[:, 4] - 2.0 * gamma0
    G12 = gam[:, 5] - gamma0 - g[:, 0] - g[:, 1] - 0.5 * G11 - 0.5 * G22
    G = np.stack([np.stack([G11, G12], axis=-1), np.stack([G12, G22], axis=-1)], axis=-2)
    return gamma0, g, G


def _sqrt_psd(C: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh(C)
    w = np.sqrt(np.clip(w, 0.0, None))
    return U @ (w[..., :, None] * np.swapaxes(U, -1, -2))


def _mix_quadratic(sde: LinearSDE, S: np.ndarray, steps: int, epsilon: float) -> np.ndarray:
    C = S / sde.T
    gamma0, g, G = gamma_quadratic_form(sde, S, steps, epsilon)
    half = _sqrt_psd(C)
    eye = np.eye(2)
    M = eye + half @ G @ half
    if np.any(np.linalg.eigvalsh(M)[..., 0] <= 0):
        raise RiccatiError("the Gaussian mixture over the linear coefficient diverges for this S")
    shifted = np.linalg.solve(eye + C @ G, (C @ g[..., None]))[..., 0]
    log_value = -gamma0 - 0.5 * np.log(np.linalg.det(M)) + 0.5 * np.einsum("ni,ni->n", g, shifted)
    return np.exp(log_value)


def _mix_gauss_hermite(sde: LinearSDE, S: np.ndarray, nodes: int, steps: int, epsilon: float) -> np.ndarray:
    x, w = hermgauss(nodes)
    x1, x2 = np.meshgrid(x, x, indexing="ij")
    unit = math.sqrt(2.0) * np.stack([x1.ravel(), x2.ravel()])
    weights = np.outer(w, w).ravel() / math.pi
    half = _sqrt_psd(S / sde.T)
    probes = half @ unit
    gam = gamma_at(sde, S, probes, steps, epsilon)
    return np.exp(-gam) @ weights


def mgf_via_mixing(sde: LinearSDE, S: SymMatrix2, nodes: int = HERMITE_NODES, mode: str = "quadratic",
                   steps: int = RICCATI_STEPS, epsilon: float = BB_EPSILON, richardson: bool = False):
    """phi(S) from the Riccati system mixed over a ~ N(0, S/T); entries of S may be arrays."""
    matrices = _as_matrices(S)
    shape = matrices.shape[:-2]
    flat = matrices.reshape(-1, 2, 2)

    def _mix(eps: float) -> np.ndarray:
        if mode == "quadratic":
            return _mix_quadratic(sde, flat, steps, eps)
        if mode == "gauss_hermite":
            return _mix_gauss_hermite(sde, flat, nodes, steps, eps)
        raise InvalidParameterError(f"unknown mixing mode {mode!r}")

    if richardson and sde.singular_at_horizon:
        coarse = _mix(epsilon)
        fine = _mix(0.5 * epsilon)
        value = 2.0 * fine - coarse
        if np.any(value > 1.0 + 1e-12):
            logger.warning("Richardson extrapolation in epsilon overshot 1; keeping the finer truncation")
            value = fine
    else:
        value = _mix(epsilon)

    value = value.reshape(shape)
    return float(value) if value.ndim == 0 else value


def verification_grid():
    """(s11, s12, s22) triples: diagonal values crossed, s12 a fraction of sqrt(s11 s22)."""
    points = []
    for s11 in VERIFY_DIAGONAL_VALUES:
        for s22 in VERIFY_DIAGONAL_VALUES:
            for fraction in VERIFY_OFF_DIAGONAL_FRACTIONS:
                points.append((s11, fraction * math.sqrt(s11 * s22), s22))
    return points


def compare_with_closed_form(spec: ProcessSpec, steps: int = VERIFY_STEPS, points=None, richardson: bool = False) -> list[dict]:
    """phi from the closed forms against the Riccati oracle on a grid of S."""
    points = verification_grid() if points is None else points
    s11, s12, s22 = (np.array(col, dtype=float) for col in zip(*points))
    S = SymMatrix2(s11, s12, s22)
    closed = np.asarray(phi(spec, S))
    oracle = np.asarray(mgf_via_mixing(linear_sde_for(spec), S, steps=steps, richardson=richardson))
    rows = []
    for i in range(len(points)):
        rows.append({
            "s11": float(s11[i]),
            "s12": float(s12[i]),
            "s22": float(s22[i]),
            "closed_form": float(closed[i]),
            "oracle": float(oracle[i]),
            "deviation": float(abs(closed[i] - oracle[i])),
        })
    logger.info(f"{spec.label}: max |phi - oracle| = {max(r['deviation'] for r in rows):.3e} over {len(rows)} points")
    return rows
