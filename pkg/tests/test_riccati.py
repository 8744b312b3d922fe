import math
from dataclasses import dataclass, field

import numpy as np
import pytest

from yule_helper.mgf import SymMatrix2, phi
from yule_helper.riccati import (
    compare_with_closed_form,
    gamma_quadratic_form,
    integrate_backward,
    linear_sde_for,
    mgf_via_mixing,
    time_mesh,
    value_function_closed_form,
    verification_grid,
    whiten,
)
from yule_helper.yule_errors import InvalidParameterError
from yule_helper.yule_models import ProcessKind, ProcessSpec


@dataclass
class TestRiccatiCommonParametersConfig:
    steps: int = 2_000
    points: list = field(default_factory=lambda: [(1.0, 0.2, 2.0), (4.0, -1.0, 0.5), (8.0, 4.0, 8.0)])
    tolerance: float = 1e-6
    bridge_tolerance: float = 1e-5


RiccatiCommonParametersConfig = TestRiccatiCommonParametersConfig()


class TestValueFunctions:
    """Numerical (V, b, gamma) against the scalar closed forms, two independent components."""

    theta_sq = 2.0
    z = 0.7

    def _run_pair(self, spec: ProcessSpec, steps: int = 2_000):
        sde = linear_sde_for(spec)
        Q = self.theta_sq * np.eye(2)
        return integrate_backward(sde, Q, np.array([self.z, self.z]), steps=steps)

    def _assert_matches(self, spec: ProcessSpec, tau: float, atol: float):
        state = self._run_pair(spec)
        V, b, gamma = value_function_closed_form(spec, self.theta_sq, self.z, tau)
        np.testing.assert_allclose(np.diag(state.V), [V, V], atol=atol)
        assert abs(state.V[0, 1]) < 1e-12
        np.testing.assert_allclose(state.b, [b, b], atol=atol)
        assert state.gamma == pytest.approx(2.0 * gamma, abs=atol)

    def test_brownian(self):
        self._assert_matches(ProcessSpec(kind=ProcessKind.BM, T=1.5), 1.5, 1e-9)

    def test_ornstein_uhlenbeck(self):
        self._assert_matches(ProcessSpec(kind=ProcessKind.OU, r=2.0), 1.0, 1e-9)

    def test_bridge_up_to_truncation(self):
        self._assert_matches(ProcessSpec(kind=ProcessKind.BB), 1.0, 1e-5)

    def test_error_estimate_is_reported(self):
        state = self._run_pair(ProcessSpec(kind=ProcessKind.BM))
        assert state.error_estimate is not None
        assert state.error_estimate < 1e-10

    def test_path_is_positive_semidefinite(self):
        sde = linear_sde_for(ProcessSpec(kind=ProcessKind.OU, r=1.0))
        state = integrate_backward(sde, np.array([[2.0, 0.5], [0.5, 1.0]]), np.zeros(2), steps=200, keep_path=True)
        assert state.V_path.shape == (201, 2, 2)
        assert np.all(np.linalg.eigvalsh(state.V_path)[:, 0] >= -1e-12)
        assert state.times[0] == 1.0 and state.times[-1] == 0.0

    def test_too_few_steps(self):
        with pytest.raises(InvalidParameterError):
            integrate_backward(linear_sde_for(ProcessSpec(kind=ProcessKind.BM)), np.eye(2), np.zeros(2), steps=1)


class TestMeshesAndWhitening:

    def test_bridge_mesh_is_graded_towards_the_horizon(self):
        mesh = time_mesh(linear_sde_for(ProcessSpec(kind=ProcessKind.BB)), 100, epsilon=1e-6)
        assert mesh[0] == pytest.approx(1.0 - 1e-6)
        assert mesh[-1] == pytest.approx(0.0, abs=1e-15)
        assert np.all(np.diff(mesh) < 0)
        assert mesh[0] - mesh[1] < mesh[-2] - mesh[-1]

    def test_whitening_preserves_the_functional(self):
        sde = linear_sde_for(ProcessSpec(kind=ProcessKind.CBM, c=0.6))
        Q = np.array([[1.0, 0.3], [0.3, 2.0]])
        z = np.array([0.4, -0.2])
        plain = integrate_backward(sde, Q, z, steps=1_000)
        white_sde, white_Q, white_z = whiten(sde, Q, z)
        white = integrate_backward(white_sde, white_Q, white_z, steps=1_000)
        assert plain.gamma == pytest.approx(white.gamma, abs=1e-10)


class TestOracleAgreement:

    config = RiccatiCommonParametersConfig

    def _assert_agrees(self, spec: ProcessSpec, tolerance: float, richardson: bool = False):
        rows = compare_with_closed_form(spec, steps=self.config.steps, points=self.config.points,
                                        richardson=richardson)
        worst = max(row["deviation"] for row in rows)
        assert worst < tolerance, f"{spec.label}: max deviation {worst:.3e}"

    def test_brownian(self):
        self._assert_agrees(ProcessSpec(kind=ProcessKind.BM), self.config.tolerance)

    def test_ornstein_uhlenbeck(self):
        self._assert_agrees(ProcessSpec(kind=ProcessKind.OU, r=1.0), self.config.tolerance)
        self._assert_agrees(ProcessSpec(kind=ProcessKind.OU, r=2.0, T=2.0), self.config.tolerance)

    def test_correlated_brownian(self):
        self._assert_agrees(ProcessSpec(kind=ProcessKind.CBM, c=0.5), self.config.tolerance)
        self._assert_agrees(ProcessSpec(kind=ProcessKind.CBM, c=-0.8), self.config.tolerance)

    def test_bridge_with_extrapolated_truncation(self):
        self._assert_agrees(ProcessSpec(kind=ProcessKind.BB), self.config.bridge_tolerance, richardson=True)

    def test_brownian_mixing_has_closed_form(self):
        # phi(theta^2 I) = psi(theta^2)^2 = theta T / sinh(theta T)
        theta, T = 1.7, 1.2
        sde = linear_sde_for(ProcessSpec(kind=ProcessKind.BM, T=T))
        value = mgf_via_mixing(sde, SymMatrix2(theta ** 2, 0.0, theta ** 2), steps=self.config.steps)
        assert value == pytest.approx(theta * T / math.sinh(theta * T), abs=1e-8)

    def test_hermite_mixing_matches_quadratic_mixing(self):
        sde = linear_sde_for(ProcessSpec(kind=ProcessKind.OU, r=0.5))
        S = SymMatrix2(2.0, 0.5, 1.0)
        quadratic = mgf_via_mixing(sde, S, steps=500, mode="quadratic")
        hermite = mgf_via_mixing(sde, S, steps=500, mode="gauss_hermite")
        assert hermite == pytest.approx(quadratic, abs=1e-8)

    def test_gamma_is_quadratic_in_the_probe(self):
        sde = linear_sde_for(ProcessSpec(kind=ProcessKind.BM))
        S = SymMatrix2(np.array([1.0]), np.array([0.3]), np.array([2.0]))
        gamma0, g, G = gamma_quadratic_form(sde, S, steps=500)
        assert gamma0.shape == (1,) and g.shape == (1, 2) and G.shape == (1, 2, 2)
        np.testing.assert_allclose(g, 0.0, atol=1e-14)
        np.testing.assert_allclose(G[0], G[0].T)

    def test_unknown_mixing_mode(self):
        with pytest.raises(InvalidParameterError):
            mgf_via_mixing(linear_sde_for(ProcessSpec(kind=ProcessKind.BM)), SymMatrix2(1.0, 0.0, 1.0),
                           steps=10, mode="simpson")

    def test_array_arguments_keep_their_shape(self):
        spec = ProcessSpec(kind=ProcessKind.BM)
        S = SymMatrix2(np.array([1.0, 2.0]), np.array([0.0, 0.5]), np.array([1.0, 3.0]))
        value = mgf_via_mixing(linear_sde_for(spec), S, steps=500)
        assert value.shape == (2,)
        np.testing.assert_allclose(value, phi(spec, S), atol=1e-7)

    def test_verification_grid_is_positive_semidefinite(self):
        grid = verification_grid()
        assert len(grid) == 75
        for s11, s12, s22 in grid:
            assert s11 * s22 - s12 * s12 >= 0

    def test_fourth_order_convergence_in_the_step_count(self):
        spec = ProcessSpec(kind=ProcessKind.OU, r=1.0)
        S = SymMatrix2(4.0, 1.0, 9.0)
        exact = phi(spec, S)
        errors = [abs(mgf_via_mixing(linear_sde_for(spec), S, steps=n) - exact) for n in (10, 20, 40)]
        for coarse, fine in zip(errors, errors[1:]):
            assert 12.0 < coarse / fine < 20.0

    def test_bridge_truncation_settles(self):
        sde = linear_sde_for(ProcessSpec(kind=ProcessKind.BB))
        S = SymMatrix2(4.0, 1.0, 9.0)
        values = [mgf_via_mixing(sde, S, epsilon=eps) for eps in (1e-3, 1e-4, 1e-5, 1e-6)]
        gaps = [abs(a - b) for a, b in zip(values, values[1:])]
        assert gaps[0] > gaps[1]
        # the last gap sits at the integrator's noise floor
        assert gaps[2] < max(gaps[1], 1e-10)
