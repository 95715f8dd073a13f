"""
Distribution Service
Probability vectors, generators and exact brute-force functionals used as
ground truth for every estimator in the package.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from src.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-12


def validate_probabilities(probs: Sequence[float]) -> Dict[str, Any]:
    """
    Check a probability vector without raising.

    Args:
        probs: Candidate probability masses

    Returns:
        Dictionary with a ``valid`` flag and a list of ``errors``
    """
    errors: List[str] = []
    values = np.asarray(probs, dtype=float)
    if values.ndim != 1 or values.size == 0:
        errors.append("Distribution must be a non-empty one-dimensional vector")
        return {"valid": False, "errors": errors}
    if not np.all(np.isfinite(values)):
        errors.append("Probabilities must be finite")
    elif np.any(values < 0):
        errors.append("Probabilities must be non-negative")
    elif np.any(values > 1):
        errors.append("Probabilities must not exceed 1")
    else:
        total = float(np.sum(values))
        if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
            errors.append(f"Probabilities must sum to 1 (got {total!r})")
    return {"valid": len(errors) == 0, "errors": errors}


@dataclass(frozen=True, eq=False)
class Distribution:
    """Immutable, eagerly validated probability vector"""

    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.probs, dtype=float)
        check = validate_probabilities(values)
        if not check["valid"]:
            raise InvalidArgumentError("; ".join(check["errors"]))
        values.setflags(write=False)
        object.__setattr__(self, "probs", values)

    @property
    def n(self) -> int:
        return int(self.probs.size)

    @property
    def sqrt_probs(self) -> np.ndarray:
        return np.sqrt(self.probs)

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "probs": self.probs.tolist()}


def renormalize(weights: Sequence[float]) -> Distribution:
    """Scale non-negative weights to unit mass (never applied implicitly)."""
    values = np.asarray(weights, dtype=float)
    if values.size == 0 or np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidArgumentError("Weights must be finite, non-negative and non-empty")
    total = float(np.sum(values))
    if total <= 0:
        raise InvalidArgumentError("Weights must have positive total mass")
    return Distribution(values / total)


def make_uniform(n: int) -> Distribution:
    if n < 1:
        raise InvalidArgumentError(f"Support size must be positive, got {n}")
    return Distribution(np.full(n, 1.0 / n))


def make_zipf(n: int, s: float) -> Distribution:
    """Zipf law p_i ∝ (i+1)^(-s)."""
    if n < 1:
        raise InvalidArgumentError(f"Support size must be positive, got {n}")
    if s < 0:
        raise InvalidArgumentError(f"Zipf exponent must be non-negative, got {s}")
    weights = np.arange(1, n + 1, dtype=float) ** (-float(s))
    return renormalize(weights)


def make_random(n: int, rng: np.random.Generator) -> Distribution:
    """Uniform draw from the probability simplex (Dirichlet with unit concentration)."""
    if n < 1:
        raise InvalidArgumentError(f"Support size must be positive, got {n}")
    return renormalize(rng.dirichlet(np.ones(n)))


def load_distribution(path: Union[str, Path]) -> Distribution:
    """Read one probability per line; blank lines and '#' comments are skipped."""
    values: List[float] = []
    try:
        with open(path, "r") as handle:
            for line_number, raw in enumerate(handle, start=1):
                text = raw.split("#", 1)[0].strip()
                if not text:
                    continue
                try:
                    values.append(float(text))
                except ValueError:
                    raise InvalidArgumentError(f"{path}:{line_number}: not a number: {text!r}")
    except OSError as e:
        logger.error(f"Cannot read distribution file {path}: {e}")
        raise InvalidArgumentError(f"Cannot read distribution file {path}: {e}")
    return Distribution(values)


def sample_indices(p: Distribution, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. indices from p (classical sampling access)."""
    if size < 1:
        raise InvalidArgumentError("Sample size must be positive")
    return rng.choice(p.n, size=size, p=p.probs)


def exact_power_sum(p: Distribution, q: float) -> float:
    """F_q(p) = Σ p_i^q with 0^q = 0."""
    if q <= 0:
        raise InvalidArgumentError(f"Power must be positive, got {q}")
    support = p.probs[p.probs > 0]
    return float(np.sum(support ** q))


def exact_tsallis(p: Distribution, q: float) -> float:
    if q == 1:
        raise InvalidArgumentError("q = 1 is the Shannon limit; use exact_shannon")
    return (exact_power_sum(p, q) - 1.0) / (1.0 - q)


def exact_shannon(p: Distribution) -> float:
    """Natural-log Shannon entropy with 0·ln 0 = 0."""
    support = p.probs[p.probs > 0]
    return float(-np.sum(support * np.log(support)))


def exact_renyi(p: Distribution, alpha: float) -> float:
    if alpha <= 0 or alpha == 1:
        raise InvalidArgumentError(f"Rényi order must be positive and != 1, got {alpha}")
    return float(np.log(exact_power_sum(p, alpha)) / (1.0 - alpha))


def exact_functional(p: Distribution, g) -> float:
    """Σ_i p_i g(p_i) over the support of p."""
    support = p.probs[p.probs > 0]
    return float(np.sum(support * g(support)))


def count_neighborhood(p: Distribution, rho: float, j: int) -> int:
    """n_j = #{i : √p_i ∈ (ρ^-(j+1), ρ^-(j-1)]}."""
    if j < 1:
        raise InvalidArgumentError(f"Level index must be >= 1, got {j}")
    if rho <= 1:
        raise InvalidArgumentError(f"Gap ratio must exceed 1, got {rho}")
    roots = p.sqrt_probs
    lower = float(rho) ** (-(j + 1))
    upper = float(rho) ** (-(j - 1))
    return int(np.count_nonzero((roots > lower) & (roots <= upper)))
