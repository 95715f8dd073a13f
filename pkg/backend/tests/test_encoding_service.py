"""
Unit tests for the encoding service and both state representations
"""

import numpy as np
import pytest

from src.config import Purification
from src.exceptions import CapacityExceededError, InvalidArgumentError
from src.services.distribution_service import Distribution, make_uniform, make_zipf
from src.services.encoding_service import (
    ANCILLA_DIM,
    BranchState,
    EncodingSpec,
    build_dense_system,
    build_encoding,
    dense_reference_state,
    dilation_residual,
    embed_branch_state,
    initial_branch_state,
    state_overlap,
    walk_phases,
)


class TestEncodingSpec:
    """Singular values of the encoded matrix"""

    def test_sigmas(self, two_point):
        spec = build_encoding(two_point)
        assert np.allclose(spec.sigmas, [0.3, 0.4])
        assert np.allclose(spec.eigenvalues(), [[0.3, -0.3], [0.4, -0.4]])

    def test_rejects_unnormalized_sigmas(self):
        with pytest.raises(InvalidArgumentError):
            EncodingSpec(np.array([0.25, 0.25]))

    def test_walk_phases_pair_to_pi(self, zipf16):
        spectrum = walk_phases(build_encoding(zipf16))
        assert np.allclose(spectrum.thetas.sum(axis=1), np.pi)
        assert spectrum.theta(0, 1) < np.pi / 2 < spectrum.theta(0, -1)


class TestBranchState:
    def test_initial_state(self, uniform4):
        state = initial_branch_state(uniform4)
        assert state.queries == 1
        assert state.norm_squared() == pytest.approx(1.0)
        assert np.allclose(state.branch_weights(), 0.125)

    def test_rejects_wrong_shape(self):
        with pytest.raises(InvalidArgumentError):
            BranchState(np.zeros((2, 2, 8)))

    def test_rejects_excess_norm(self):
        amplitudes = np.zeros((1, 2, ANCILLA_DIM))
        amplitudes[0, :, 0] = 1.0
        with pytest.raises(InvalidArgumentError):
            BranchState(amplitudes)

    def test_evolve_accumulates(self, uniform4):
        state = initial_branch_state(uniform4)
        next_state = state.evolve(state.amplitudes * 0.5, queries=3, leakage=0.75)
        assert next_state.queries == 4
        assert next_state.leakage == pytest.approx(0.75)
        assert state.queries == 1


class TestDenseSystem:
    @pytest.mark.parametrize("purification", [Purification.FIXED, Purification.RANDOM])
    def test_dilation_eigenvectors(self, purification):
        system = build_dense_system(make_zipf(4, 1.0), purification, seed=3)
        assert dilation_residual(system) < 1e-12

    @pytest.mark.parametrize("purification", [Purification.FIXED, Purification.RANDOM])
    def test_projector_keeps_every_eigenvector(self, purification):
        system = build_dense_system(Distribution([0.5, 0.3, 0.15, 0.05]), purification, seed=2)
        assert np.allclose(system.eigvecs[..., ~system.pi_h_mask], 0.0)
        kept = np.sum(np.abs(system.eigvecs[..., system.pi_h_mask]) ** 2, axis=-1)
        assert np.allclose(kept, 1.0)

    def test_dilation_orientation(self, two_point):
        system = build_dense_system(two_point)
        dim = system.system_dim
        phi = system.eigvecs[1, 0]
        assert np.allclose(system.encoded @ phi[:dim], system.sigmas[1] * phi[dim:])
        assert np.allclose(system.encoded.conj().T @ phi[dim:], system.sigmas[1] * phi[:dim])

    def test_random_purification_width(self):
        system = build_dense_system(make_uniform(3), Purification.RANDOM, seed=1)
        assert system.k == 3
        assert system.dilated_dim == 2 * 3 * 3 * 3 * 2

    def test_capacity(self):
        with pytest.raises(CapacityExceededError):
            build_dense_system(make_uniform(9))

    def test_block_state_embeds_onto_reference(self, uniform4):
        system = build_dense_system(uniform4)
        reference = dense_reference_state(uniform4, system=system)
        embedded = embed_branch_state(initial_branch_state(uniform4), system)
        assert reference.norm_squared() == pytest.approx(1.0)
        assert abs(state_overlap(embedded, reference.vector)) == pytest.approx(1.0)

    def test_embed_rejects_mismatched_n(self, uniform4, two_point):
        with pytest.raises(InvalidArgumentError):
            embed_branch_state(initial_branch_state(two_point), build_dense_system(uniform4))
