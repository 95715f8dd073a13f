"""
Unit tests for the polynomial service
"""

import numpy as np
import pytest
from numpy.polynomial import chebyshev

from src.config import PolynomialSettings
from src.exceptions import ConstructionFailedError, InvalidArgumentError
from src.services.polynomial_service import (
    ChebPoly,
    Parity,
    Representation,
    build_neg_power,
    build_pos_power,
    build_sqrt_log,
    cap_max,
    chebyshev_coefficients,
    constant_poly,
    evaluate,
    from_coefficients,
    parity_gap,
    pos_power_scale,
    shannon_bound,
    smooth_step,
)


class TestChebPoly:
    """Coefficient handling and evaluation"""

    def test_constant(self):
        poly = constant_poly(0.5)
        assert poly.degree == 0
        assert poly.parity == Parity.EVEN
        assert poly.cert.passed
        assert evaluate(poly, 0.3) == pytest.approx(0.5)

    def test_zero_constant_is_even(self):
        poly = constant_poly(0.0)
        assert poly.parity == Parity.EVEN
        assert evaluate(poly, np.array([-1.0, 0.0, 1.0])).tolist() == [0.0, 0.0, 0.0]

    def test_odd_coefficients(self):
        poly = from_coefficients([0.0, 0.5, 0.0, 0.25])
        assert poly.parity == Parity.ODD
        assert poly.degree == 3
        assert parity_gap(poly) == pytest.approx(0.0, abs=1e-15)

    def test_mixed_parity_is_rejected(self):
        with pytest.raises(InvalidArgumentError):
            from_coefficients([0.5, 0.5])
        with pytest.raises(InvalidArgumentError):
            ChebPoly(coeffs=np.array([0.5, 0.5]), parity=Parity.EVEN, degree=1)

    def test_evaluate_outside_domain(self):
        with pytest.raises(InvalidArgumentError):
            evaluate(constant_poly(1.0), 1.5)

    def test_cap_flag_for_large_series(self):
        poly = from_coefficients([2.0])
        assert poly.cert.cap_ok is False
        assert cap_max(poly)[0] == pytest.approx(2.0)

    def test_interpolation_recovers_chebyshev_basis(self):
        coeffs = chebyshev_coefficients(lambda x: chebyshev.chebval(x, [0, 0, 0, 0, 1]), 8)
        expected = np.zeros(9)
        expected[4] = 1.0
        assert np.allclose(coeffs, expected, atol=1e-12)


def test_smooth_step_limits():
    values = smooth_step(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert values[0] == 0.0 and values[1] == 0.0
    assert values[2] == pytest.approx(0.5)
    assert values[3] == 1.0 and values[4] == 1.0


class TestNegPower:
    """Even approximation of (delta^c / 2) x^-c"""

    def test_certified_explicit(self):
        poly = build_neg_power(0.5, 0.125, 0.01)
        assert poly.representation == Representation.EXPLICIT
        assert poly.parity == Parity.EVEN
        assert poly.cert.passed
        assert poly.cert.sup_error <= 0.01
        assert cap_max(poly)[0] <= 1.0
        assert parity_gap(poly) < 1e-12

    def test_values_on_interval(self):
        poly = build_neg_power(0.5, 0.125, 0.01)
        grid = np.linspace(0.125, 1.0, 200)
        target = 0.125 ** 0.5 / 2.0 * grid ** -0.5
        assert np.max(np.abs(evaluate(poly, grid) - target)) <= 0.01

    def test_surrogate_above_explicit_limit(self):
        poly = build_neg_power(0.5, 0.125, 0.01, PolynomialSettings(max_explicit_degree=0))
        assert poly.is_surrogate
        assert poly.cert.method == "surrogate"
        assert poly.cert.passed
        assert poly.degree > 0

    @pytest.mark.parametrize("c, delta, eps", [(0.0, 0.1, 0.01), (0.5, 0.6, 0.01), (0.5, 0.1, 0.0)])
    def test_rejects_bad_parameters(self, c, delta, eps):
        with pytest.raises(InvalidArgumentError):
            build_neg_power(c, delta, eps)

    def test_construction_failure(self):
        settings = PolynomialSettings(degree_constant=1e-6, max_rounds=1)
        with pytest.raises(ConstructionFailedError) as excinfo:
            build_neg_power(0.5, 0.01, 1e-6, settings)
        assert excinfo.value.sup_error > 1e-6
        assert excinfo.value.to_dict()["degree"] > 0


class TestPosPower:
    def test_certified_with_small_x_margin(self):
        c, nu, beta, eta = 1.0, 0.0625, 0.25, 0.01
        poly = build_pos_power(c, nu, beta, eta)
        assert poly.cert.passed
        assert poly.cert.checks["small_x_margin"] >= 0
        grid = np.linspace(nu, beta, 100)
        target = pos_power_scale(c, beta) * grid ** c
        assert np.max(np.abs(evaluate(poly, grid) - target)) <= eta

    def test_rejects_unordered_interval(self):
        with pytest.raises(InvalidArgumentError):
            build_pos_power(1.0, 0.3, 0.2, 0.01)


class TestSqrtLog:
    def test_condition_margin(self):
        poly = build_sqrt_log(1, 0.2, 2)
        assert poly.cert.passed
        assert poly.cert.checks["condition_margin"] >= 0
        x = np.linspace(0.3, 1.0, 50)
        residual = shannon_bound(2) * evaluate(poly, x / 2.0) ** 2 + np.log(x ** 2)
        assert np.max(np.abs(residual)) <= 0.2 / 24.0

    def test_bound_values(self):
        assert shannon_bound(1) == pytest.approx(4 * np.log(2))
        assert shannon_bound(3) == pytest.approx(12 * np.log(2))

    def test_rejects_level_zero(self):
        with pytest.raises(InvalidArgumentError):
            build_sqrt_log(0, 0.1)
