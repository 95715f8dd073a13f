"""
Discriminator Service
Non-destructive singular value discrimination modelled by its input-output
contract: a flag qubit (c or d) is set to xi_{i,nu} while the eigenvector
phi_{i,nu} is left in place.

Profiles decide xi inside the transition band (gamma/rho, gamma), where the
contract leaves it free:

- ideal: nu|0> above gamma, i|1> below gamma/rho, hard switch at the
  log-midpoint gamma/sqrt(rho)
- smooth: angle linear in log(sigma) between the two ends
- adversarial: seeded rotations of size up to eps2 outside the band and
  seeded arbitrary flags inside it
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from src.config import DiscriminatorSettings, Profile
from src.exceptions import ContractViolationError, InvalidArgumentError
from src.services.encoding_service import HADAMARD, NU, BranchState, DenseState, EncodingSpec
from src.utils import ceil_log2, seed_stream

logger = logging.getLogger(__name__)

FLAG_REGISTERS = ("c", "d")
CEIL_GUARD = 1e-9


@dataclass(frozen=True)
class DiscriminatorConfig:
    """Threshold gamma, gap ratio rho, precisions eps1/eps2 and flag profile"""

    gamma: float
    rho: float
    eps1: float
    eps2: float
    profile: Profile = Profile.SMOOTH
    seed: int = 0
    stream: int = 0
    c_bm: int = 1
    c_gpe: int = 1
    perturb_map: bool = False

    def __post_init__(self):
        if not self.rho > 1:
            raise InvalidArgumentError(f"Gap ratio must exceed 1, got {self.rho}")
        if not 0 < self.gamma < 0.5:
            raise InvalidArgumentError(f"Threshold must lie in (0, 1/2), got {self.gamma}")
        for name in ("eps1", "eps2"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise InvalidArgumentError(f"{name} must lie in (0, 1], got {value}")
        object.__setattr__(self, "profile", Profile(self.profile))

    @property
    def lower(self) -> float:
        return self.gamma / self.rho

    @classmethod
    def for_level(
        cls, gamma: float, rho: float, eps1: float, eps2: float,
        settings: Optional[DiscriminatorSettings] = None, stream: int = 0,
    ) -> "DiscriminatorConfig":
        settings = settings or DiscriminatorSettings()
        return cls(
            gamma=gamma, rho=rho, eps1=eps1, eps2=eps2, profile=settings.profile, seed=settings.seed,
            stream=stream, c_bm=settings.c_bm, c_gpe=settings.c_gpe, perturb_map=settings.perturb_map,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "gamma": self.gamma, "rho": self.rho, "eps1": self.eps1, "eps2": self.eps2,
            "profile": self.profile.value, "seed": self.seed, "stream": self.stream,
            "c_bm": self.c_bm, "c_gpe": self.c_gpe, "perturb_map": self.perturb_map,
        }


def discriminator_cost(cfg: DiscriminatorConfig) -> int:
    """c_BM * ceil(log2(1/eps1)) + c_GPE * ceil(log2(1/eps2) / gamma)."""
    marking = ceil_log2(1.0 / cfg.eps1)
    estimation = math.ceil(math.log2(1.0 / cfg.eps2) / cfg.gamma - CEIL_GUARD)
    return int(cfg.c_bm * marking + cfg.c_gpe * max(0, estimation))


def _small_rotation(rng: np.random.Generator, bound: float) -> np.ndarray:
    """Random U(2) element with ||U - I|| <= bound."""
    if bound <= 0:
        return np.eye(2, dtype=complex)
    max_angle = 2.0 * math.asin(min(1.0, bound / 2.0))
    angle = rng.uniform(0.5, 1.0) * max_angle
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    pauli = (
        axis[0] * np.array([[0, 1], [1, 0]], dtype=complex)
        + axis[1] * np.array([[0, -1j], [1j, 0]], dtype=complex)
        + axis[2] * np.array([[1, 0], [0, -1]], dtype=complex)
    )
    return math.cos(angle) * np.eye(2) + 1j * math.sin(angle) * pauli


def _adversarial_parameters(cfg: DiscriminatorConfig) -> Dict[str, Any]:
    rng = seed_stream(cfg.seed, cfg.stream, 1)
    return {
        "upper": _small_rotation(rng, cfg.eps2),
        "lower": _small_rotation(rng, cfg.eps2),
        "frequency": rng.uniform(1.0, 12.0),
        "offset": rng.uniform(0.0, 2.0 * math.pi),
        "phase": rng.uniform(0.0, 2.0 * math.pi),
    }


def _smooth_angle(sigmas: np.ndarray, cfg: DiscriminatorConfig) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logs = np.log(np.where(sigmas > 0, sigmas, 1.0))
    angle = 0.5 * math.pi * (math.log(cfg.gamma) - logs) / math.log(cfg.rho)
    angle = np.clip(angle, 0.0, 0.5 * math.pi)
    angle = np.where(sigmas >= cfg.gamma, 0.0, angle)
    return np.where(sigmas <= cfg.lower, 0.5 * math.pi, angle)


def xi_table(sigmas: np.ndarray, cfg: DiscriminatorConfig) -> np.ndarray:
    """
    Flag states for every sigma and nu.

    Returns:
        complex array of shape (len(sigmas), 2, 2): [index, nu (+1 first), flag component]
    """
    sigmas = np.asarray(sigmas, dtype=float)
    if np.any(sigmas < 0) or np.any(sigmas > 0.5 + 1e-12):
        raise InvalidArgumentError("Singular values must lie in [0, 1/2]")
    above = sigmas >= cfg.gamma
    below = sigmas <= cfg.lower

    if cfg.profile == Profile.IDEAL:
        midpoint = cfg.gamma / math.sqrt(cfg.rho)
        angle = np.where(above | (~below & (sigmas >= midpoint)), 0.0, 0.5 * math.pi)
        phase = np.ones_like(sigmas, dtype=complex)
    elif cfg.profile == Profile.SMOOTH:
        angle = _smooth_angle(sigmas, cfg)
        phase = np.ones_like(sigmas, dtype=complex)
    else:
        params = _adversarial_parameters(cfg)
        with np.errstate(divide="ignore"):
            logs = np.log(np.where(sigmas > 0, sigmas, 1.0))
        wobble = 0.5 + 0.5 * np.sin(params["frequency"] * logs + params["offset"])
        angle = np.where(above, 0.0, np.where(below, 0.5 * math.pi, 0.5 * math.pi * wobble))
        phase = np.where(above | below, 1.0 + 0j, np.exp(1j * params["phase"]))

    table = np.zeros((sigmas.size, 2, 2), dtype=complex)
    table[:, :, 0] = np.cos(angle)[:, None] * NU[None, :]
    table[:, :, 1] = (1j * phase * np.sin(angle))[:, None]

    if cfg.profile == Profile.ADVERSARIAL:
        table[above] = np.einsum("xy,nty->ntx", params["upper"], table[above])
        table[below] = np.einsum("xy,nty->ntx", params["lower"], table[below])
    if cfg.perturb_map:
        rotation = _small_rotation(seed_stream(cfg.seed, cfg.stream, 2), cfg.eps1)
        table = np.einsum("xy,nty->ntx", rotation, table)
    return table


def xi_response(sigma: float, nu: int, cfg: DiscriminatorConfig) -> np.ndarray:
    """Two-component flag state written for singular value sigma on branch nu."""
    if nu not in (1, -1):
        raise InvalidArgumentError(f"nu must be +1 or -1, got {nu}")
    return xi_table(np.array([sigma]), cfg)[0, 0 if nu > 0 else 1]


def _flag_axis(flag_register: str) -> int:
    if flag_register not in FLAG_REGISTERS:
        raise InvalidArgumentError(f"Flag register must be 'c' or 'd', got {flag_register!r}")
    return FLAG_REGISTERS.index(flag_register)


def apply_discriminator(
    state: BranchState, cfg: DiscriminatorConfig, flag_register: str, spec: EncodingSpec
) -> BranchState:
    """
    Write xi_{i,nu} on the flag register of every populated (i, nu) block.

    Raises:
        ContractViolationError: a populated block has the flag already set,
            or ancillas a, b are not |++>
    """
    axis = _flag_axis(flag_register)
    registers = state.registers()
    if spec.n != state.n:
        raise InvalidArgumentError("Encoding and state disagree on n")
    outside = registers.copy()
    outside[:, :, 0, 0] = 0.0
    if np.any(outside != 0):
        raise ContractViolationError("Discriminator input has ancillas a, b outside |++>")
    block = registers[:, :, 0, 0]  # [i, nu, c, d]
    flagged = np.take(block, 1, axis=2 + axis)
    if np.any(flagged != 0):
        raise ContractViolationError(f"Flag register {flag_register} is not |0> on a populated block")

    xi = xi_table(spec.sigmas, cfg)
    source = np.take(block, 0, axis=2 + axis)  # [i, nu, other flag]
    new_block = np.zeros_like(block)
    if axis == 0:
        new_block[:, :, 0, :] = source * xi[:, :, 0, None]
        new_block[:, :, 1, :] = source * xi[:, :, 1, None]
    else:
        new_block[:, :, :, 0] = source * xi[:, :, 0, None]
        new_block[:, :, :, 1] = source * xi[:, :, 1, None]
    out = np.zeros_like(registers)
    out[:, :, 0, 0] = new_block
    return state.evolve(out.reshape(state.amplitudes.shape), queries=discriminator_cost(cfg))


def apply_discriminator_dense(state: DenseState, cfg: DiscriminatorConfig, flag_register: str) -> DenseState:
    """Dense counterpart: the same contract applied to explicit eigenvector components."""
    axis = _flag_axis(flag_register)
    system = state.system
    vector = np.einsum("xa,yb,xycds->abcds", HADAMARD, HADAMARD, state.vector)
    outside = vector.copy()
    outside[0, 0] = 0.0
    if np.max(np.abs(outside)) > 1e-12:
        raise ContractViolationError("Discriminator input has ancillas a, b outside |++>")
    block = vector[0, 0]  # [c, d, s]
    if np.max(np.abs(np.take(block, 1, axis=axis))) > 1e-12:
        raise ContractViolationError(f"Flag register {flag_register} is not |0> on a populated block")

    xi = xi_table(system.sigmas, cfg)
    source = np.take(block, 0, axis=axis).copy()  # [other flag, s]
    written = np.zeros((2,) + source.shape, dtype=complex)  # [flag, other flag, s]
    remainder = source.copy()
    for i in range(system.n):
        for col in range(2):
            eig = system.eigvecs[i, col]
            coeff = source @ eig.conj()
            component = coeff[:, None] * eig[None, :]
            remainder -= component
            written[0] += xi[i, col, 0] * component
            written[1] += xi[i, col, 1] * component
    # the contract only covers the span of the eigenvectors
    written[0] += remainder
    new_block = written if axis == 0 else np.swapaxes(written, 0, 1)
    out = np.zeros_like(vector)
    out[0, 0] = new_block
    out = np.einsum("ax,by,xycds->abcds", HADAMARD, HADAMARD, out)
    return state.evolve(out, queries=discriminator_cost(cfg))
