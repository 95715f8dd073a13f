"""
Unit tests for singular value transformation on both backends
"""

import numpy as np
import pytest

from src.exceptions import InvalidArgumentError
from src.services.encoding_service import (
    build_dense_system,
    build_encoding,
    dense_reference_state,
    embed_branch_state,
    initial_branch_state,
    state_overlap,
)
from src.services.polynomial_service import ChebPoly, Parity, build_neg_power, constant_poly, from_coefficients
from src.services.svt_service import apply_svt, apply_svt_dense, branch_values


class TestApplySvt:
    """Block backend"""

    def test_identity_polynomial(self, uniform4):
        state = initial_branch_state(uniform4)
        new_state, report = apply_svt(constant_poly(1.0), build_encoding(uniform4), state)
        assert np.allclose(new_state.amplitudes, state.amplitudes)
        assert report.total == pytest.approx(0.0)
        assert new_state.queries == 1

    def test_constant_scales_and_leaks(self, uniform4):
        state = initial_branch_state(uniform4)
        new_state, report = apply_svt(constant_poly(0.5), build_encoding(uniform4), state)
        assert new_state.norm_squared() == pytest.approx(0.25)
        assert report.total == pytest.approx(0.75)
        assert new_state.leakage == pytest.approx(0.75)

    def test_odd_polynomial_flips_negative_branch(self, two_point):
        poly = from_coefficients([0.0, 1.0])
        values = branch_values(poly, build_encoding(two_point))
        assert np.allclose(values, [[0.3, -0.3], [0.4, -0.4]])

    def test_charges_degree(self, two_point):
        poly = build_neg_power(0.5, 0.125, 0.01)
        new_state, _ = apply_svt(poly, build_encoding(two_point), initial_branch_state(two_point))
        assert new_state.queries == 1 + poly.degree

    def test_uncertified_polynomial_is_rejected(self, uniform4):
        poly = ChebPoly(coeffs=np.array([1.0]), parity=Parity.EVEN, degree=0)
        with pytest.raises(InvalidArgumentError):
            apply_svt(poly, build_encoding(uniform4), initial_branch_state(uniform4))

    def test_cap_violation_is_rejected(self, uniform4):
        with pytest.raises(InvalidArgumentError):
            apply_svt(from_coefficients([1.5]), build_encoding(uniform4), initial_branch_state(uniform4))


class TestApplySvtDense:
    """Dense backend keeps the garbage in the |->_a component"""

    def test_dense_matches_block_on_projected_part(self, uniform4):
        poly = from_coefficients([0.0, 0.0, 0.8])
        system = build_dense_system(uniform4)
        block_state, block_report = apply_svt(poly, build_encoding(uniform4), initial_branch_state(uniform4))
        dense_state, dense_report = apply_svt_dense(poly, dense_reference_state(uniform4, system=system))
        embedded = embed_branch_state(block_state, system)
        assert dense_state.norm_squared() == pytest.approx(1.0)
        assert dense_report.total == pytest.approx(block_report.total)
        overlap = state_overlap(embedded, dense_state.vector)
        assert overlap.real == pytest.approx(block_state.norm_squared())
