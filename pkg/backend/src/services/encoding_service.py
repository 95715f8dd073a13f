"""
Encoding Service
Purified-oracle encoding of a distribution as A = sum_i (sqrt(p_i)/2) |psi~_i><psi_i|,
the walk spectrum of its Hermitian dilation, and the two state representations
the pipeline runs on:

- BranchState: the block backend. Amplitudes are labelled by the dilation
  eigenvector (i, nu) and the four ancilla qubits (a, b, c, d); a and b are
  stored in the +/- basis, c and d in the computational basis.
- DenseState: the reference backend. Explicit vectors over the ancillas, the
  dilation qubit and the registers (i, i', purification, R).
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from src.config import Purification
from src.exceptions import CapacityExceededError, ContractViolationError, InvalidArgumentError
from src.services.distribution_service import Distribution
from src.utils import seed_stream

logger = logging.getLogger(__name__)

NU = np.array([1.0, -1.0])
ANCILLA_DIM = 16
DENSE_CAP = 8
SPECTRUM_TOLERANCE = 1e-12
NORM_TOLERANCE = 1e-10
R_COLUMN = np.array([0.5, np.sqrt(3.0) / 2.0])


def ancilla_index(a: int, b: int, c: int, d: int) -> int:
    """Flat index of ancilla content; a and b use 0 for |+> and 1 for |->."""
    return 8 * a + 4 * b + 2 * c + d


@dataclass(frozen=True, eq=False)
class EncodingSpec:
    """Singular values sigma_i = sqrt(p_i)/2 of the encoded matrix"""

    sigmas: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.sigmas, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise InvalidArgumentError("Singular values must form a non-empty vector")
        if np.any(values < 0) or np.any(values > 0.5 + SPECTRUM_TOLERANCE):
            raise InvalidArgumentError("Singular values must lie in [0, 1/2]")
        if abs(float(np.sum((2.0 * values) ** 2)) - 1.0) > 1e-12:
            raise InvalidArgumentError("Singular values must satisfy sum (2 sigma)^2 = 1")
        values.setflags(write=False)
        object.__setattr__(self, "sigmas", values)

    @property
    def n(self) -> int:
        return int(self.sigmas.size)

    def eigenvalues(self) -> np.ndarray:
        """lambda_{i,nu} = nu * sigma_i as an (n, 2) array, nu = +1 first."""
        return np.outer(self.sigmas, NU)

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "sigmas": self.sigmas.tolist()}


@dataclass(frozen=True, eq=False)
class WalkSpectrum:
    """Eigenphases theta_{i,nu} = arccos(nu sigma_i) of the qubitization walk"""

    thetas: np.ndarray = field(repr=False)

    def theta(self, i: int, nu: int) -> float:
        return float(self.thetas[i, 0 if nu > 0 else 1])


def build_encoding(p: Distribution) -> EncodingSpec:
    return EncodingSpec(p.sqrt_probs / 2.0)


def walk_phases(spec: EncodingSpec) -> WalkSpectrum:
    thetas = np.arccos(np.clip(spec.eigenvalues(), -1.0, 1.0))
    if np.any(np.abs(thetas.sum(axis=1) - np.pi) > SPECTRUM_TOLERANCE):
        raise InvalidArgumentError("Walk phases of a branch pair must sum to pi")
    return WalkSpectrum(thetas)


@dataclass(frozen=True, eq=False)
class BranchState:
    """
    Block-backend state: amplitudes[i, nu, ancilla] with nu index 0 for +1.

    ``leakage`` holds the squared norm moved into garbage by transformations;
    ``queries`` counts oracle uses spent producing the state.
    """

    amplitudes: np.ndarray = field(repr=False)
    queries: int = 0
    leakage: float = 0.0

    def __post_init__(self):
        values = np.array(self.amplitudes, dtype=complex)
        if values.ndim != 3 or values.shape[1:] != (2, ANCILLA_DIM):
            raise InvalidArgumentError(f"Branch amplitudes must have shape (n, 2, {ANCILLA_DIM})")
        if float(np.sum(np.abs(values) ** 2)) > 1.0 + NORM_TOLERANCE:
            raise InvalidArgumentError("Branch state norm exceeds 1")
        values.setflags(write=False)
        object.__setattr__(self, "amplitudes", values)

    @property
    def n(self) -> int:
        return int(self.amplitudes.shape[0])

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def registers(self) -> np.ndarray:
        """View as amplitudes[i, nu, a, b, c, d]."""
        return self.amplitudes.reshape(self.n, 2, 2, 2, 2, 2)

    def branch_weights(self) -> np.ndarray:
        """Squared norm per (i, nu), summed over ancillas."""
        return np.sum(np.abs(self.amplitudes) ** 2, axis=2)

    def evolve(self, amplitudes: np.ndarray, queries: int = 0, leakage: float = 0.0) -> "BranchState":
        return replace(self, amplitudes=amplitudes, queries=self.queries + int(queries), leakage=self.leakage + float(leakage))


def initial_branch_state(p: Distribution) -> BranchState:
    """sum_i sqrt(p_i/2) (|phi_{i,+1}> + |phi_{i,-1}>) with ancillas |++00>; one oracle query."""
    amplitudes = np.zeros((p.n, 2, ANCILLA_DIM), dtype=complex)
    amplitudes[:, :, ancilla_index(0, 0, 0, 0)] = np.sqrt(p.probs / 2.0)[:, None]
    return BranchState(amplitudes, queries=1)


@dataclass(frozen=True, eq=False)
class DenseSystem:
    """
    Explicit registers of the encoding.

    The system register is (i, i', f, R) of dimension n*n*k*2; the dilation
    qubit doubles it. ``eigvecs[i, nu]`` is phi_{i,nu} = (|0>psi_i + nu|1>psi~_i)/sqrt(2).
    """

    n: int
    k: int
    sigmas: np.ndarray = field(repr=False)
    purifications: np.ndarray = field(repr=False)
    encoded: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)
    pi_h_mask: np.ndarray = field(repr=False)
    initial_vector: np.ndarray = field(repr=False)

    @property
    def system_dim(self) -> int:
        return self.n * self.n * self.k * 2

    @property
    def dilated_dim(self) -> int:
        return 2 * self.system_dim


def _system_index(n: int, k: int, i: int, i_copy: int, f: int, r: int) -> int:
    return ((i * n + i_copy) * k + f) * 2 + r


def _purification_states(n: int, purification: Purification, seed: int) -> np.ndarray:
    if purification == Purification.FIXED:
        return np.ones((n, 1), dtype=complex)
    rng = seed_stream(seed, n)
    states = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return states / np.linalg.norm(states, axis=1, keepdims=True)


def build_dense_system(
    p: Distribution,
    purification: Purification = Purification.FIXED,
    seed: int = 0,
    cap: int = DENSE_CAP,
) -> DenseSystem:
    """
    Materialize the registers, the encoded matrix A and the dilation eigenvectors.

    A is computed from the oracle's action on |0>: for inputs in the image of
    Pi, A|i, i, f, 0> = (1/2) conj(<i, f|O_p|0>) |i, 0, 0, 0>.

    Raises:
        CapacityExceededError: n above the dense cap
    """
    n = p.n
    if n > cap:
        raise CapacityExceededError(f"Dense backend holds n <= {cap}, got n = {n}")
    states = _purification_states(n, Purification(purification), seed)
    k = states.shape[1]
    dim = n * n * k * 2
    sqrt_probs = p.sqrt_probs
    oracle_column = sqrt_probs[:, None] * states

    encoded = np.zeros((dim, dim), dtype=complex)
    for i in range(n):
        row = _system_index(n, k, i, 0, 0, 0)
        for f in range(k):
            col = _system_index(n, k, i, i, f, 0)
            encoded[row, col] = R_COLUMN[0] * np.conj(oracle_column[i, f])

    psi = np.zeros((n, dim), dtype=complex)
    psi_tilde = np.zeros((n, dim), dtype=complex)
    initial = np.zeros(2 * dim, dtype=complex)
    for i in range(n):
        for f in range(k):
            psi[i, _system_index(n, k, i, i, f, 0)] = states[i, f]
        psi_tilde[i, _system_index(n, k, i, 0, 0, 0)] = 1.0
        initial[:dim] += sqrt_probs[i] * psi[i]

    sigmas = sqrt_probs / 2.0
    residual = np.max(np.abs(psi @ encoded.T - sigmas[:, None] * psi_tilde))
    if residual > 1e-12:
        raise InvalidArgumentError(f"Encoded matrix does not map psi_i to sigma_i psi~_i (residual {residual:.2e})")

    eigvecs = np.zeros((n, 2, 2 * dim), dtype=complex)
    for col, nu in enumerate(NU):
        eigvecs[:, col, :dim] = psi / np.sqrt(2.0)
        eigvecs[:, col, dim:] = nu * psi_tilde / np.sqrt(2.0)

    pi_tilde = np.zeros(dim, dtype=bool)
    pi_main = np.zeros(dim, dtype=bool)
    for i in range(n):
        pi_tilde[_system_index(n, k, i, 0, 0, 0)] = True
        for f in range(k):
            pi_main[_system_index(n, k, i, i, f, 0)] = True
    pi_h_mask = np.concatenate([pi_main, pi_tilde])

    system = DenseSystem(
        n=n, k=k, sigmas=sigmas, purifications=states, encoded=encoded,
        eigvecs=eigvecs, pi_h_mask=pi_h_mask, initial_vector=initial,
    )
    dilation = dilation_residual(system)
    if dilation > 1e-12:
        raise ContractViolationError(f"Dilation eigenvectors are off by {dilation:.2e}")
    logger.debug(f"Dense system n={n} k={k} dim={2 * dim} built ({Purification(purification).value})")
    return system


def dilation_residual(system: DenseSystem) -> float:
    """max ||H phi_{i,nu} - nu sigma_i phi_{i,nu}|| using A and A^dagger blockwise."""
    dim = system.system_dim
    worst = 0.0
    for i in range(system.n):
        for col, nu in enumerate(NU):
            vec = system.eigvecs[i, col]
            top = system.encoded.conj().T @ vec[dim:]
            bottom = system.encoded @ vec[:dim]
            image = np.concatenate([top, bottom])
            worst = max(worst, float(np.linalg.norm(image - nu * system.sigmas[i] * vec)))
    return worst


@dataclass(frozen=True, eq=False)
class DenseState:
    """vector[a, b, c, d, s] with a, b in the computational basis and s the dilated system"""

    system: DenseSystem
    vector: np.ndarray = field(repr=False)
    queries: int = 0
    leakage: float = 0.0

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.vector) ** 2))

    def evolve(self, vector: np.ndarray, queries: int = 0, leakage: float = 0.0) -> "DenseState":
        return replace(self, vector=vector, queries=self.queries + int(queries), leakage=self.leakage + float(leakage))


HADAMARD = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2.0)


def dense_reference_state(
    p: Distribution,
    purification: Purification = Purification.FIXED,
    seed: int = 0,
    cap: int = DENSE_CAP,
    system: Optional[DenseSystem] = None,
) -> DenseState:
    """|++>_{ab}|00>_{cd}|0>_{dilation} sum_i sqrt(p_i)|i>|i>|phi_i>|0> as an explicit vector."""
    system = system or build_dense_system(p, purification, seed, cap)
    vector = np.zeros((2, 2, 2, 2, system.dilated_dim), dtype=complex)
    plus = HADAMARD[:, 0]
    vector[:, :, 0, 0, :] = np.einsum("a,b,s->abs", plus, plus, system.initial_vector)
    return DenseState(system=system, vector=vector, queries=1)


def embed_branch_state(state: BranchState, system: DenseSystem) -> np.ndarray:
    """Dense vector of a block state: sum amp[i, nu, anc] |anc> (x) |phi_{i,nu}>."""
    if state.n != system.n:
        raise InvalidArgumentError("Branch state and dense system disagree on n")
    registers = state.registers()
    # +/- basis to computational basis on a and b
    computational = np.einsum("xa,yb,inabcd->inxycd", HADAMARD, HADAMARD, registers)
    return np.einsum("inxycd,ins->xycds", computational, system.eigvecs)


def state_overlap(left: np.ndarray, right: np.ndarray) -> complex:
    return complex(np.vdot(left.ravel(), right.ravel()))
