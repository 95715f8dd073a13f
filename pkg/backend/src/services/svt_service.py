"""
SVT Service
Singular value transformation by its per-branch contract: the |+>_a component
along phi_{i,nu} is multiplied by P(nu sigma_i) and the remainder leaves the
projected subspace as garbage, tracked only by its squared norm.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict

import numpy as np

from src.exceptions import InvalidArgumentError
from src.services.encoding_service import (
    HADAMARD,
    BranchState,
    DenseState,
    EncodingSpec,
)
from src.services.polynomial_service import ChebPoly, Parity, evaluate

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class LeakageReport:
    """Squared norm removed per (i, nu) branch by one transformation"""

    per_branch: np.ndarray = field(repr=False)

    @property
    def total(self) -> float:
        return float(np.sum(self.per_branch))

    def to_dict(self) -> Dict[str, Any]:
        return {"total": self.total, "per_branch": self.per_branch.tolist()}


def _check_poly(poly: ChebPoly) -> None:
    if poly.cert is None:
        raise InvalidArgumentError(f"Polynomial {poly.label or poly.degree} has no certificate")
    if not poly.cert.cap_ok:
        raise InvalidArgumentError(f"Polynomial {poly.label or poly.degree} exceeds |P| <= 1")
    if poly.parity == Parity.ODD:
        logger.debug("Applying an odd polynomial; odd transformations are experimental")


def branch_values(poly: ChebPoly, spec: EncodingSpec) -> np.ndarray:
    """P(nu sigma_i) as an (n, 2) array."""
    return np.asarray(evaluate(poly, spec.eigenvalues()), dtype=float)


def apply_svt(poly: ChebPoly, spec: EncodingSpec, state: BranchState) -> tuple:
    """
    Apply the transformation for ``poly`` to every branch of ``state``.

    Args:
        poly: Certified definite-parity polynomial
        spec: Encoding whose singular values the polynomial acts on
        state: Block state; only its a = |+> part is transformed

    Returns:
        (new BranchState, LeakageReport); deg(poly) queries are charged
    """
    _check_poly(poly)
    if spec.n != state.n:
        raise InvalidArgumentError("Encoding and state disagree on n")
    values = branch_values(poly, spec)
    registers = state.registers().copy()
    plus = registers[:, :, 0]
    leaked = np.sum(np.abs(plus) ** 2, axis=(2, 3, 4)) * (1.0 - values ** 2)
    registers[:, :, 0] = plus * values[:, :, None, None, None]
    report = LeakageReport(per_branch=leaked)
    new_state = state.evolve(registers.reshape(state.amplitudes.shape), queries=poly.degree, leakage=report.total)
    return new_state, report


def apply_svt_dense(poly: ChebPoly, state: DenseState) -> tuple:
    """
    Dense counterpart of apply_svt: |+>_a|phi_{i,nu}> maps to
    P(nu sigma_i)|+>|phi_{i,nu}> + sqrt(1 - P^2)|->|phi_{i,nu}>.
    """
    _check_poly(poly)
    system = state.system
    values = np.asarray(evaluate(poly, np.outer(system.sigmas, [1.0, -1.0])), dtype=float)
    vector = np.einsum("xa,xbcds->abcds", HADAMARD, state.vector)  # a to the +/- basis
    plus, minus = vector[0].copy(), vector[1].copy()
    leaked = np.zeros((system.n, 2))
    for i in range(system.n):
        for col in range(2):
            eig = system.eigvecs[i, col]
            coeff = np.tensordot(plus, eig.conj(), axes=([3], [0]))
            component = coeff[..., None] * eig
            value = values[i, col]
            garbage = np.sqrt(max(0.0, 1.0 - value ** 2))
            plus += (value - 1.0) * component
            minus += garbage * component
            leaked[i, col] = float(np.sum(np.abs(coeff) ** 2)) * (1.0 - value ** 2)
    vector = np.einsum("ax,xbcds->abcds", HADAMARD, np.stack([plus, minus]))
    report = LeakageReport(per_branch=leaked)
    return state.evolve(vector, queries=poly.degree, leakage=report.total), report
