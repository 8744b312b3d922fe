import math
from dataclasses import dataclass

import numpy as np
import pytest

from dataset_definitions.reference_values import ScalarChecks
from yule_helper.jet import jet_variable
from yule_helper.mgf import (
    SymMatrix2,
    eigen_lambda,
    eigen_theta,
    log_psi,
    phi,
    phi_s12_jet,
    psi,
    psi_bb,
    psi_bm,
    psi_ou,
    singularity_abscissa,
)
from yule_helper.yule_errors import InvalidParameterError, JetSingularityError
from yule_helper.yule_models import ProcessKind, ProcessSpec


@dataclass
class TestMgfProcessesConfig:
    bm: ProcessSpec
    ou: ProcessSpec
    bb: ProcessSpec
    cbm: ProcessSpec
    bm_long: ProcessSpec

    def all(self) -> list[ProcessSpec]:
        return [self.bm, self.ou, self.bb, self.cbm, self.bm_long]


MgfProcessesConfig = TestMgfProcessesConfig(
    bm=ProcessSpec(kind=ProcessKind.BM),
    ou=ProcessSpec(kind=ProcessKind.OU, r=1.0),
    bb=ProcessSpec(kind=ProcessKind.BB),
    cbm=ProcessSpec(kind=ProcessKind.CBM, c=0.5),
    bm_long=ProcessSpec(kind=ProcessKind.BM, T=2.5),
)


class TestPsi:

    config = MgfProcessesConfig

    def test_reference_values(self):
        assert psi_bm(1.0) == pytest.approx(ScalarChecks.PSI_BM_AT_1.value, abs=1e-6)
        assert psi_bb(1.0) == pytest.approx(ScalarChecks.PSI_BB_AT_1.value, abs=1e-6)
        assert psi_ou(1.0, r=1.0) == pytest.approx(ScalarChecks.PSI_OU_AT_1.value, abs=2e-6)

    def test_normalised_at_zero(self):
        for spec in self.config.all():
            assert psi(spec, 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_brownian_closed_form_on_both_routes(self):
        theta = np.array([0.1, 1.0, 1.9, 2.1, 10.0, 40.0])
        T = 1.3
        expected = np.sqrt(theta * T / np.sinh(theta * T))
        np.testing.assert_allclose(psi_bm(theta ** 2, T=T), expected, rtol=1e-11)

    def test_bridge_closed_form(self):
        theta = np.array([0.5, 3.0, 12.0, 60.0])
        np.testing.assert_allclose(psi_bb(theta ** 2), theta / (2.0 * np.sinh(theta / 2.0)), rtol=1e-11)

    def test_ou_reduces_to_brownian_as_rate_vanishes(self):
        for theta_sq in (0.5, 3.0, 30.0):
            assert psi_ou(theta_sq, r=1e-7) == pytest.approx(psi_bm(theta_sq), rel=1e-6)

    def test_decreasing_in_theta(self):
        grid = np.linspace(0.0, 200.0, 51)
        for spec in self.config.all():
            values = np.asarray(psi(spec, grid))
            assert np.all(np.diff(values) < 0)

    def test_large_argument_does_not_overflow(self):
        value = log_psi(self.config.ou, 1e6)
        assert np.isfinite(value)
        assert value < 0

    def test_jet_matches_scalar_derivative(self):
        x0, h = 2.0, 1e-4
        jet = log_psi(self.config.ou, jet_variable(x0, 2))
        central = (log_psi(self.config.ou, x0 + h) - log_psi(self.config.ou, x0 - h)) / (2 * h)
        assert jet.value == pytest.approx(log_psi(self.config.ou, x0), rel=1e-14)
        assert jet.coeffs[1] == pytest.approx(central, rel=1e-7)

    def test_negative_argument_rejected(self):
        with pytest.raises(InvalidParameterError):
            psi_bm(-0.1)

    def test_non_finite_argument_rejected(self):
        with pytest.raises(InvalidParameterError):
            psi_bm(float("nan"))


class TestSingularities:

    config = MgfProcessesConfig

    def test_brownian_and_bridge(self):
        assert singularity_abscissa(self.config.bm) == pytest.approx(math.pi ** 2)
        assert singularity_abscissa(self.config.bm_long) == pytest.approx((math.pi / 2.5) ** 2)
        assert singularity_abscissa(self.config.bb) == pytest.approx(4.0 * math.pi ** 2)

    def test_abscissa_is_radius_of_the_log_psi_series(self):
        # a simple zero of 1/psi at -y* makes |c_n / c_{n+1}| * n / (n + 1) tend to y*
        n = 30
        for spec in (self.config.bm, self.config.ou, self.config.bb):
            coeffs = log_psi(spec, jet_variable(0.0, n + 1)).coeffs
            estimate = abs(coeffs[n] / coeffs[n + 1]) * n / (n + 1)
            assert estimate == pytest.approx(singularity_abscissa(spec), rel=1e-3)


class TestEigenvalues:

    def test_reference_matrix(self):
        t1, t2 = eigen_theta(SymMatrix2(3.0, 1.0, 1.0))
        assert t1 == pytest.approx(ScalarChecks.EIGEN_LARGE.value, abs=1e-5)
        assert t2 == pytest.approx(ScalarChecks.EIGEN_SMALL.value, abs=1e-5)

    def test_correlated_transform_of_identity(self):
        t1, t2 = eigen_lambda(SymMatrix2(1.0, 0.0, 1.0), 0.5)
        assert t1 == pytest.approx(1.5)
        assert t2 == pytest.approx(0.5)

    def test_correlation_outside_range(self):
        with pytest.raises(InvalidParameterError):
            eigen_lambda(SymMatrix2(1.0, 0.0, 1.0), 1.0)

    def test_jets_on_the_diagonal_are_rejected(self):
        with pytest.raises(JetSingularityError):
            eigen_theta(SymMatrix2(1.0, jet_variable(0.0, 2), 1.0))


class TestPhi:

    config = MgfProcessesConfig

    def test_normalised_at_zero(self):
        for spec in self.config.all():
            assert phi(spec, SymMatrix2(0.0, 0.0, 0.0)) == pytest.approx(1.0, abs=1e-15)

    def test_factorises_into_psi(self):
        spec = self.config.ou
        assert phi(spec, SymMatrix2(2.0, 0.0, 5.0)) == pytest.approx(psi(spec, 2.0) * psi(spec, 5.0), rel=1e-13)

    def test_exchange_symmetry(self):
        for spec in self.config.all():
            assert phi(spec, SymMatrix2(0.7, 0.3, 2.0)) == pytest.approx(phi(spec, SymMatrix2(2.0, 0.3, 0.7)), rel=1e-13)

    def test_independent_components_even_in_s12(self):
        for spec in (self.config.bm, self.config.ou, self.config.bb):
            assert phi(spec, SymMatrix2(1.0, 0.4, 2.0)) == pytest.approx(phi(spec, SymMatrix2(1.0, -0.4, 2.0)), rel=1e-13)

    def test_correlation_breaks_s12_symmetry(self):
        spec = self.config.cbm
        assert phi(spec, SymMatrix2(1.0, 0.4, 2.0)) != pytest.approx(phi(spec, SymMatrix2(1.0, -0.4, 2.0)), rel=1e-6)

    def test_uncorrelated_cbm_is_brownian(self):
        cbm = ProcessSpec(kind=ProcessKind.CBM, c=0.0)
        S = SymMatrix2(1.0, 0.3, 4.0)
        assert phi(cbm, S) == pytest.approx(phi(self.config.bm, S), rel=1e-14)

    def test_monotone_in_diagonal(self):
        for spec in self.config.all():
            values = [phi(spec, SymMatrix2(s11, 0.2, 1.0)) for s11 in (0.5, 1.0, 2.0, 4.0)]
            assert all(b < a for a, b in zip(values, values[1:]))


class TestPhiS12Jet:

    config = MgfProcessesConfig

    def _finite_difference(self, spec: ProcessSpec, s11: float, s22: float, h: float = 1e-3):
        plus = phi(spec, SymMatrix2(s11, h, s22))
        minus = phi(spec, SymMatrix2(s11, -h, s22))
        centre = phi(spec, SymMatrix2(s11, 0.0, s22))
        return (plus - minus) / (2 * h), (plus - 2 * centre + minus) / (h * h)

    def test_matches_finite_differences(self):
        for spec in self.config.all():
            for s11, s22 in ((1.0, 3.0), (2.0, 2.0)):
                jet = phi_s12_jet(spec, s11, s22, 4)
                first, second = self._finite_difference(spec, s11, s22)
                assert jet.value == pytest.approx(phi(spec, SymMatrix2(s11, 0.0, s22)), rel=1e-12)
                assert jet.coeffs[1] == pytest.approx(first, rel=1e-5, abs=1e-9)
                assert jet.coeffs[2] == pytest.approx(second / 2.0, rel=1e-4, abs=1e-8)

    def test_series_and_direct_routes_agree(self, monkeypatch):
        for spec in self.config.all():
            series = phi_s12_jet(spec, 1.0, 3.0, 6)
            monkeypatch.setattr("yule_helper.mgf.DIRECT_ROUTE_RATIO", 0.0)
            direct = phi_s12_jet(spec, 1.0, 3.0, 6)
            monkeypatch.undo()
            np.testing.assert_allclose(series.coeffs, direct.coeffs, rtol=1e-9, atol=1e-13)

    def test_continuous_at_the_diagonal(self):
        for spec in self.config.all():
            on = phi_s12_jet(spec, 2.0, 2.0, 6)
            near = phi_s12_jet(spec, 2.0, 2.0 + 1e-7, 6)
            np.testing.assert_allclose(on.coeffs, near.coeffs, rtol=1e-5, atol=1e-9)

    def test_odd_coefficients_vanish_for_independent_components(self):
        jet = phi_s12_jet(self.config.bm, np.array([0.5, 2.0, 9.0]), np.array([1.0, 2.0, 0.1]), 5)
        np.testing.assert_allclose(jet.coeffs[1::2], 0.0, atol=1e-14)

    def test_batched_nodes_match_single_nodes(self):
        s11 = np.array([0.1, 1.0, 25.0, 400.0])
        s22 = np.array([0.2, 1.0, 3.0, 900.0])
        batch = phi_s12_jet(self.config.ou, s11, s22, 4)
        for i in range(s11.size):
            single = phi_s12_jet(self.config.ou, s11[i], s22[i], 4)
            np.testing.assert_allclose(batch.coeffs[:, i], single.coeffs, rtol=1e-12, atol=1e-300)
