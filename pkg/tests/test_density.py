import numpy as np
import pytest

from dataset_definitions.reference_values import BmDensityCoefficients, BmMoments
from yule_helper.density import (
    DensityPoly,
    check_density_order,
    density_moments,
    emit_density_table,
    eval_density,
    fit_density,
    fit_density_normal_equations,
    flatness_ratio,
    negativity,
)
from yule_helper.yule_errors import InvalidParameterError
from yule_helper.yule_models import ProcessKind, ProcessSpec


def _bm_moment_sequence(order: int) -> list[float]:
    even = {k: value for k, value in (row.value for row in BmMoments)}
    return [1.0] + [0.0 if k % 2 else even[k] for k in range(1, order + 1)]


class TestFitDensity:

    def _assert_even_coefficients(self, p: DensityPoly, expected, atol: float):
        np.testing.assert_allclose(p.coeffs[0::2], expected, atol=atol)
        np.testing.assert_array_equal(p.coeffs[1::2], 0.0)

    def test_order_four(self):
        p = fit_density(_bm_moment_sequence(4))
        self._assert_even_coefficients(p, BmDensityCoefficients.ORDER_4.value, 1e-4)

    def test_order_six(self):
        p = fit_density(_bm_moment_sequence(6))
        self._assert_even_coefficients(p, BmDensityCoefficients.ORDER_6.value, 5e-3)

    def test_order_eight(self):
        p = fit_density(_bm_moment_sequence(8))
        self._assert_even_coefficients(p, BmDensityCoefficients.ORDER_8.value, 5e-2)

    def test_order_zero_is_uniform(self):
        p = fit_density([1.0])
        assert p.order == 0
        np.testing.assert_allclose(eval_density(p, [-1.0, 0.0, 1.0]), 0.5)

    def test_reproduces_its_moments(self):
        mu = [1.0, 0.2, 0.3, 0.05, 0.15]
        p = fit_density(mu)
        np.testing.assert_allclose(density_moments(p), mu, atol=1e-12)

    def test_normal_equations_agree(self):
        mu = _bm_moment_sequence(8)
        np.testing.assert_allclose(fit_density_normal_equations(mu).coeffs, fit_density(mu).coeffs, atol=1e-8)

    def test_higher_moments_of_the_fit(self):
        p = fit_density(_bm_moment_sequence(4))
        extended = density_moments(p, 6)
        assert extended.shape == (7,)
        assert extended[5] == pytest.approx(0.0, abs=1e-15)

    def test_invalid_moment_sequences(self):
        for bad in ([], [0.9, 0.0, 0.2], [1.0, 0.0, 1.5], [1.0, np.nan], [1.0] * 18):
            with pytest.raises(InvalidParameterError):
                fit_density(bad)


class TestDensityShape:

    p4 = fit_density(_bm_moment_sequence(4))

    def test_table(self):
        frame = emit_density_table(self.p4, 5)
        assert list(frame.columns) == ["x", "pdf"]
        np.testing.assert_allclose(frame["x"], [-1.0, -0.5, 0.0, 0.5, 1.0])
        assert frame["pdf"].iloc[2] == pytest.approx(BmDensityCoefficients.ORDER_4.value[0], abs=1e-4)

    def test_table_needs_two_points(self):
        with pytest.raises(InvalidParameterError):
            emit_density_table(self.p4, 1)

    def test_order_four_dips_below_zero_at_the_ends(self):
        low, fraction = negativity(self.p4)
        assert low < 0
        assert 0 < fraction < 0.2

    def test_flat_near_zero(self):
        assert 1.0 < flatness_ratio(self.p4) < 1.5

    def test_flatness_of_non_positive_curve(self):
        p = DensityPoly(coeffs=np.array([0.0, 1.0]), order=1)
        assert flatness_ratio(p) == float("inf")


class TestDensityOrders:

    def test_odd_order_rejected_for_symmetric_laws(self):
        with pytest.raises(InvalidParameterError):
            check_density_order(ProcessSpec(kind=ProcessKind.BM), 3)

    def test_odd_order_allowed_for_correlated_components(self):
        check_density_order(ProcessSpec(kind=ProcessKind.CBM, c=0.3), 3)

    def test_order_out_of_range(self):
        with pytest.raises(InvalidParameterError):
            check_density_order(ProcessSpec(kind=ProcessKind.BM), 18)
