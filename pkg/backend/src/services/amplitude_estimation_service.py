"""
Amplitude Estimation Service
Canonical amplitude estimation simulated through its exact outcome
distribution, median boosting, and the two-stage protocol that first decides
whether the amplitude is below the target precision.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.config import AESettings
from src.exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_AE_SETTINGS = AESettings()
AMPLITUDE_TOLERANCE = 1e-9
TAIL_CHUNK = 1 << 18


@dataclass(frozen=True, eq=False)
class AEDistribution:
    """Folded outcome distribution over distinct estimates sin^2(pi y / M)"""

    grid: int
    outcomes: np.ndarray = field(repr=False)
    estimates: np.ndarray = field(repr=False)
    probs: np.ndarray = field(repr=False)

    def mass_within(self, a: float, radius: float) -> float:
        return float(np.sum(self.probs[np.abs(self.estimates - a) <= radius]))


@dataclass(frozen=True)
class AEOutcome:
    estimate: float
    grover_calls: int
    repeats: int

    def to_dict(self) -> Dict[str, Any]:
        return {"estimate": self.estimate, "grover_calls": self.grover_calls, "repeats": self.repeats}


@dataclass(frozen=True)
class TwoStageResult:
    """Output of the two-stage protocol with every round it ran"""

    estimate: float
    queries: int
    rounds: Tuple[AEOutcome, ...]
    returned_zero: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimate": self.estimate,
            "queries": self.queries,
            "returned_zero": self.returned_zero,
            "rounds": [r.to_dict() for r in self.rounds],
        }


def _check_amplitude(a: float) -> float:
    if not -AMPLITUDE_TOLERANCE <= a <= 1.0 + AMPLITUDE_TOLERANCE:
        raise InvalidArgumentError(f"Amplitude must lie in [0, 1], got {a}")
    return min(1.0, max(0.0, float(a)))


def _kernel(delta: np.ndarray, grid: int) -> np.ndarray:
    """|(1/M) sum_k exp(2 pi i k delta)|^2, equal to 1 at integer delta."""
    delta = np.asarray(delta, dtype=float)
    delta = delta - np.round(delta)
    denominator = np.sin(np.pi * delta)
    numerator = np.sin(np.pi * grid * delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = (numerator / (grid * denominator)) ** 2
    return np.where(np.abs(denominator) < 1e-15, 1.0, value)


def outcome_probabilities(a: float, grid: int, outcomes: np.ndarray) -> np.ndarray:
    """P(y) for phase estimation started in the equal mix of eigenphases +-theta_a / pi."""
    omega = math.asin(math.sqrt(a)) / math.pi
    y = np.asarray(outcomes, dtype=float) / grid
    return 0.5 * (_kernel(omega - y, grid) + _kernel(-omega - y, grid))


@lru_cache(maxsize=4096)
def _distribution_cached(a: float, t: int) -> AEDistribution:
    grid = t
    raw = outcome_probabilities(a, grid, np.arange(grid))
    half = grid // 2
    outcomes = np.arange(half + 1)
    folded = raw[: half + 1].copy()
    mirrored = np.arange(1, (grid + 1) // 2)
    folded[mirrored] += raw[grid - mirrored]
    estimates = np.sin(np.pi * outcomes / grid) ** 2
    for array in (outcomes, estimates, folded):
        array.setflags(write=False)
    return AEDistribution(grid=grid, outcomes=outcomes, estimates=estimates, probs=folded)


def ae_distribution(a: float, t: int) -> AEDistribution:
    """
    Exact outcome distribution of amplitude estimation with t grid points.

    Args:
        a: True amplitude in [0, 1]
        t: Number of Grover powers (grid size M = t)

    Returns:
        AEDistribution whose probabilities sum to 1
    """
    if t < 1:
        raise InvalidArgumentError(f"t must be a positive integer, got {t}")
    return _distribution_cached(_check_amplitude(a), int(t))


@lru_cache(maxsize=1024)
def _window_cached(a: float, grid: int, window: int) -> Tuple[np.ndarray, np.ndarray]:
    omega = math.asin(math.sqrt(a)) / math.pi
    centers = {int(round(omega * grid)) % grid, int(round((1.0 - omega) * grid)) % grid}
    offsets = np.arange(-window, window + 1)
    outcomes = np.unique(np.concatenate([(c + offsets) % grid for c in sorted(centers)]))
    probs = outcome_probabilities(a, grid, outcomes)
    outcomes.setflags(write=False)
    probs.setflags(write=False)
    return outcomes, probs


def _outside_probabilities(a: float, grid: int, start: int, stop: int, excluded: np.ndarray) -> np.ndarray:
    """P(y) for y in [start, stop) with the window outcomes zeroed."""
    probs = outcome_probabilities(a, grid, np.arange(start, stop))
    lo, hi = np.searchsorted(excluded, [start, stop])
    probs[excluded[lo:hi] - start] = 0.0
    return probs


@lru_cache(maxsize=256)
def _tail_chunk_masses(a: float, grid: int, window: int) -> np.ndarray:
    excluded, _ = _window_cached(a, grid, window)
    masses = np.array([
        float(np.sum(_outside_probabilities(a, grid, start, min(start + TAIL_CHUNK, grid), excluded)))
        for start in range(0, grid, TAIL_CHUNK)
    ])
    masses.setflags(write=False)
    return masses


def _sample_tail(a: float, grid: int, window: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from the pmf restricted to outcomes outside the window."""
    excluded, _ = _window_cached(a, grid, window)
    masses = _tail_chunk_masses(a, grid, window)
    cumulative = np.cumsum(masses)
    targets = rng.random(size) * cumulative[-1]
    chunks = np.minimum(np.searchsorted(cumulative, targets, side="right"), masses.size - 1)
    draws = np.empty(size, dtype=np.int64)
    for chunk in np.unique(chunks):
        selected = chunks == chunk
        start = int(chunk) * TAIL_CHUNK
        stop = min(start + TAIL_CHUNK, grid)
        local = np.cumsum(_outside_probabilities(a, grid, start, stop, excluded))
        positions = np.searchsorted(local, targets[selected] - (cumulative[chunk] - masses[chunk]), side="right")
        draws[selected] = start + np.minimum(positions, stop - start - 1)
    return draws


def sample_estimates(
    a: float, t: int, size: int, rng: np.random.Generator, settings: Optional[AESettings] = None
) -> np.ndarray:
    """
    Draw ``size`` estimates from the outcome distribution.

    Grids up to ``max_grid`` are sampled from the exact folded pmf. Larger grids
    are sampled exactly inside a window around each peak; the rest of the grid
    is sampled by inverse CDF over the same kernel, one chunk at a time.
    """
    settings = settings or DEFAULT_AE_SETTINGS
    a = _check_amplitude(a)
    if t <= settings.max_grid:
        dist = ae_distribution(a, t)
        picks = rng.choice(dist.estimates.size, size=size, p=dist.probs / dist.probs.sum())
        return dist.estimates[picks]

    outcomes, probs = _window_cached(a, int(t), settings.window)
    inside = float(np.sum(probs))
    draws = np.empty(size, dtype=np.int64)
    from_window = rng.random(size) < min(1.0, inside)
    count = int(np.sum(from_window))
    draws[from_window] = outcomes[rng.choice(outcomes.size, size=count, p=probs / inside)]
    if count < size:
        draws[~from_window] = _sample_tail(a, int(t), settings.window, size - count, rng)
    return np.sin(np.pi * draws / t) ** 2


def boost_repeats(eta: float, settings: Optional[AESettings] = None) -> int:
    """R = ceil(boost_constant * ln(2/eta)) runs make the median fail with probability <= eta/2."""
    settings = settings or DEFAULT_AE_SETTINGS
    return int(math.ceil(settings.boost_constant * math.log(2.0 / eta)))


def median_boosted_ae(
    a: float, t: int, eta: float, rng: np.random.Generator, settings: Optional[AESettings] = None
) -> AEOutcome:
    """Lower median of R independent amplitude-estimation runs."""
    if not 0 < eta < 1:
        raise InvalidArgumentError(f"eta must lie in (0, 1), got {eta}")
    if t < 1:
        raise InvalidArgumentError(f"t must be a positive integer, got {t}")
    repeats = boost_repeats(eta, settings)
    samples = np.sort(sample_estimates(a, int(t), repeats, rng, settings))
    return AEOutcome(estimate=float(samples[(repeats - 1) // 2]), grover_calls=int(t), repeats=repeats)


def first_stage_calls(eps: float) -> int:
    return int(math.ceil(math.pi * math.sqrt(80.0 / eps)))


def second_stage_calls(first_estimate: float, eps: float) -> int:
    return int(math.ceil(max(4.0 * math.pi * math.sqrt(2.0 * first_estimate) / eps, math.pi * math.sqrt(2.0 / eps))))


def round_queries(outcome: AEOutcome, cost_per_call: int) -> int:
    """Every run uses 2t+1 applications of the state unitary; reflections are free."""
    return int(outcome.repeats * (2 * outcome.grover_calls + 1) * cost_per_call)


def two_stage_ae(
    a: float,
    eps: float,
    eta: float,
    rng: np.random.Generator,
    cost_per_call: int = 1,
    settings: Optional[AESettings] = None,
) -> TwoStageResult:
    """
    Estimate a to additive eps with failure probability at most eta.

    Stage one decides whether a is below the precision (then 0 is returned);
    otherwise stage two runs with t sized from the first estimate.

    Args:
        a: True amplitude of the state unitary
        eps: Target precision in (0, 1]
        eta: Failure probability in (0, 1)
        rng: Random stream owned by the caller
        cost_per_call: Oracle queries of one application of the state unitary
        settings: Simulation knobs

    Returns:
        TwoStageResult with the estimate and total queries
    """
    if not 0 < eps <= 1:
        raise InvalidArgumentError(f"eps must lie in (0, 1], got {eps}")
    a = _check_amplitude(a)
    rounds: List[AEOutcome] = []
    first = median_boosted_ae(a, first_stage_calls(eps), eta, rng, settings)
    rounds.append(first)
    if first.estimate <= 0.75 * eps:
        estimate, returned_zero = 0.0, True
    else:
        second = median_boosted_ae(a, second_stage_calls(first.estimate, eps), eta, rng, settings)
        rounds.append(second)
        estimate, returned_zero = second.estimate, False
    queries = sum(round_queries(r, cost_per_call) for r in rounds)
    logger.debug(f"two-stage AE a={a:.6g} eps={eps:.3g}: estimate {estimate:.6g}, {queries} queries")
    return TwoStageResult(estimate=estimate, queries=queries, rounds=tuple(rounds), returned_zero=returned_zero)


def error_radius(a: float, t: int) -> float:
    """2 pi sqrt(a(1-a))/t + pi^2/t^2."""
    return 2.0 * math.pi * math.sqrt(a * (1.0 - a)) / t + math.pi ** 2 / t ** 2
