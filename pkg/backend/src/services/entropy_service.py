"""
Entropy Service
Level planners and end-to-end estimators for Tsallis, Shannon and Renyi
entropies, together with the classical plug-in baselines.

Every planner returns a LevelPlan whose polynomials are certified; whether
the plan meets the estimation conditions is reported by
verify_plan_conditions.
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import Backend, EngineConfig, Purification
from src.exceptions import InvalidArgumentError, UnsupportedError
from src.services.distribution_service import Distribution
from src.services.multilevel_service import (
    ConditionResult,
    EstimateReport,
    FunctionalSpec,
    LevelPlan,
    build_level_plan,
    check_bounds,
    check_cap,
    check_last_level,
    check_local_approximation,
    check_tail,
    run_estimate,
)
from src.services.polynomial_service import build_neg_power, build_pos_power, build_sqrt_log, shannon_bound

logger = logging.getLogger(__name__)

# pos_power certificates are defined for eta < 1/2; smaller eta is stricter
MAX_POS_POWER_ETA = 0.25
# plan_tsallis_gt1 accepts eps < 1/2 only
MAX_GT1_EPS = 0.49


def power_functional(q: float) -> FunctionalSpec:
    """g(x) = x^(q-1), so sum_i p_i g(p_i) = F_q(p)."""
    c = q - 1.0

    def g(x):
        return np.asarray(x, dtype=float) ** c

    if q < 1:
        C = 2.0 ** (3.0 - q)

        def bound(j: int) -> float:
            return 4.0 * 2.0 ** (2.0 * j * (1.0 - q))
    else:
        C = 2.0

        def bound(j: int) -> float:
            return 2.0 ** (2.0 - 2.0 * (j - 2) * c)

    return FunctionalSpec(name="power_sum", g=g, C=C, bound=bound, params={"q": q})


def shannon_functional() -> FunctionalSpec:
    """g(x) = -ln x, so sum_i p_i g(p_i) = H(p)."""

    def g(x):
        return -np.log(np.asarray(x, dtype=float))

    return FunctionalSpec(name="shannon", g=g, C=2.0, bound=shannon_bound)


def tsallis_lt1_levels(q: float, n: int, eps: float) -> int:
    C = 2.0 ** (3.0 - q)
    return int(math.ceil(math.log2(3.0 * (1.0 + C) * n / eps) / (2.0 * q)))


def plan_tsallis_lt1(q: float, n: int, eps: float, engine: Optional[EngineConfig] = None) -> LevelPlan:
    """
    Plan for F_q with 0 < q < 1.

    Args:
        q: Order in (0, 1)
        n: Support size the tail condition is planned for
        eps: Precision of the power sum, in (0, 1)
        engine: Polynomial settings are taken from here

    Returns:
        LevelPlan with rho = 2 and P_j = neg_power(1-q, 2^(-j-2), eps_j)
    """
    if not 0 < q < 1:
        raise InvalidArgumentError(f"q must lie in (0, 1), got {q}")
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    if not 0 < eps < 1:
        raise InvalidArgumentError(f"eps must lie in (0, 1), got {eps}")
    settings = (engine or EngineConfig()).polynomials
    m = tsallis_lt1_levels(q, n, eps)
    c = 1.0 - q
    polys, poly_eps = [], []
    for j in range(1, m + 1):
        eps_j = eps / (96.0 * 2.0 ** (2.0 * (j + 1) * c) * m)
        delta_j = 2.0 ** (-j - 2)
        polys.append(build_neg_power(c, delta_j, eps_j, settings))
        poly_eps.append(eps_j)
    plan = build_level_plan(
        power_functional(q), polys, eps, rho=2.0, n=n, poly_eps=poly_eps,
        params={"planner": "tsallis_lt1", "q": q, "n": n, "eps": eps},
    )
    logger.debug(f"plan_tsallis_lt1 q={q} n={n} eps={eps}: m={m}, degrees {[p.degree for p in polys]}")
    return plan


def tsallis_gt1_levels(q: float, eps: float) -> int:
    return int(math.ceil(math.log2(9.0 / eps) / (2.0 * (q - 1.0))))


def plan_tsallis_gt1(q: float, eps: float, engine: Optional[EngineConfig] = None) -> LevelPlan:
    """
    Plan for F_q with q > 1; independent of n.

    P_j = pos_power(q-1, phi_{j+1}/2, phi_{j-1}/2, eps_j) with
    eps_j = eps/(24 m B_j) and a tighter eps_m on the last level.
    """
    if not q > 1:
        raise InvalidArgumentError(f"q must exceed 1, got {q}")
    if not 0 < eps < 0.5:
        raise InvalidArgumentError(f"eps must lie in (0, 1/2), got {eps}")
    settings = (engine or EngineConfig()).polynomials
    functional = power_functional(q)
    c = q - 1.0
    m = tsallis_gt1_levels(q, eps)
    phis = [2.0 ** (-j) for j in range(m + 2)]
    polys, poly_eps = [], []
    for j in range(1, m + 1):
        bound = functional.bound(j)
        eps_j = eps / (24.0 * m * bound)
        if j == m:
            eps_j = min(eps_j, eps / (2.0 ** (1.0 + (m + 2) * c) * bound))
        eps_j = min(eps_j, MAX_POS_POWER_ETA)
        polys.append(build_pos_power(c, phis[j + 1] / 2.0, phis[j - 1] / 2.0, eps_j, settings))
        poly_eps.append(eps_j)
    plan = build_level_plan(
        functional, polys, eps, rho=2.0, poly_eps=poly_eps,
        params={"planner": "tsallis_gt1", "q": q, "eps": eps},
    )
    logger.debug(f"plan_tsallis_gt1 q={q} eps={eps}: m={m}, degrees {[p.degree for p in polys]}")
    return plan


def shannon_levels(n: int, eps: float, tail_factor: float = 1.0) -> int:
    """Smallest m >= 1 with 2^m / sqrt(m) >= sqrt(tail_factor * n / eps), compared squared."""
    target = tail_factor * n / eps
    m = 1
    while 4.0 ** m / m < target * (1.0 - 1e-12):
        m += 1
    return m


def plan_shannon(n: int, eps: float, engine: Optional[EngineConfig] = None) -> LevelPlan:
    """Plan for H(p) with P_j = sqrt_log(j) and B_j = 4 ln2 * j."""
    if n < 2:
        raise InvalidArgumentError(f"n must be at least 2, got {n}")
    if not 0 < eps < 1:
        raise InvalidArgumentError(f"eps must lie in (0, 1), got {eps}")
    engine = engine or EngineConfig()
    m = shannon_levels(n, eps, engine.shannon_tail_factor)
    polys = [build_sqrt_log(j, eps, m, engine.polynomials) for j in range(1, m + 1)]
    plan = build_level_plan(
        shannon_functional(), polys, eps, rho=2.0, n=n,
        params={"planner": "shannon", "n": n, "eps": eps, "tail_factor": engine.shannon_tail_factor},
    )
    logger.debug(f"plan_shannon n={n} eps={eps}: m={m}, degrees {[p.degree for p in polys]}")
    return plan


def plan_tsallis(q: float, n: int, eps: float, engine: Optional[EngineConfig] = None) -> LevelPlan:
    """Power-sum plan for either side of q = 1."""
    if q == 1:
        raise UnsupportedError("q = 1 has no power-sum plan; use plan_shannon")
    return plan_tsallis_lt1(q, n, eps, engine) if q < 1 else plan_tsallis_gt1(q, eps, engine)


@dataclass(frozen=True)
class PlanConditionReport:
    """Outcome of every grid check on a plan"""

    conditions: Tuple[ConditionResult, ...]

    @property
    def passed(self) -> bool:
        return all(condition.passed for condition in self.conditions)

    def condition(self, name: str) -> ConditionResult:
        for condition in self.conditions:
            if condition.name == name:
                return condition
        raise KeyError(name)

    def failed(self) -> List[str]:
        return [condition.name for condition in self.conditions if not condition.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "failed": self.failed(),
            "conditions": {condition.name: condition.to_dict() for condition in self.conditions},
        }


def verify_plan_conditions(plan: LevelPlan, p: Optional[Distribution] = None) -> PlanConditionReport:
    """
    Grid checks of a plan:

    - bounds: B_j >= 2 max |g(x^2)| on every interval
    - cap: |P_j| <= 1 on [-1, 1]
    - local_approximation: the scaled P_j^2 matches g(x^2) to eps/(12m)
    - last_level: B_m P_m^2 stays below C |g|
    - tail: mass below phi_m for ``p``, or the worst case at the planner's n
    """
    report = PlanConditionReport(conditions=(
        check_bounds(plan),
        check_cap(plan),
        check_local_approximation(plan),
        check_last_level(plan),
        check_tail(plan, p),
    ))
    if not report.passed:
        logger.info(f"Plan {plan.params.get('planner', plan.functional.name)} fails: {', '.join(report.failed())}")
    return report


def _run(
    p: Distribution, plan: LevelPlan, rng: np.random.Generator, backend: Backend,
    engine: EngineConfig, purification: Purification, seed: int,
) -> EstimateReport:
    return run_estimate(
        p, plan, rng, backend=backend, settings=engine.discriminator, ae_settings=engine.ae,
        purification=purification, seed=seed,
    )


def tsallis_plan_for(p: Distribution, q: float, eps: float, engine: Optional[EngineConfig] = None) -> LevelPlan:
    """Plan for T_q at precision eps: the power sum is planned to |1-q| eps."""
    inner = abs(1.0 - q) * eps
    if q > 1:
        inner = min(inner, MAX_GT1_EPS)
    return plan_tsallis(q, p.n, inner, engine)


def estimate_tsallis(
    p: Distribution,
    q: float,
    eps: float,
    rng: np.random.Generator,
    backend: Backend = Backend.BLOCK,
    engine: Optional[EngineConfig] = None,
    plan: Optional[LevelPlan] = None,
    purification: Purification = Purification.FIXED,
    seed: int = 0,
) -> Tuple[float, EstimateReport]:
    """
    Estimate T_q(p) = (F_q - 1)/(1 - q) to additive eps.

    q = 1 is routed to estimate_shannon.
    """
    if q <= 0:
        raise InvalidArgumentError(f"q must be positive, got {q}")
    if q == 1:
        return estimate_shannon(p, eps, rng, backend, engine, plan, purification, seed)
    engine = engine or EngineConfig()
    plan = plan or tsallis_plan_for(p, q, eps, engine)
    report = _run(p, plan, rng, backend, engine, purification, seed)
    return (report.estimate - 1.0) / (1.0 - q), report


def estimate_shannon(
    p: Distribution,
    eps: float,
    rng: np.random.Generator,
    backend: Backend = Backend.BLOCK,
    engine: Optional[EngineConfig] = None,
    plan: Optional[LevelPlan] = None,
    purification: Purification = Purification.FIXED,
    seed: int = 0,
) -> Tuple[float, EstimateReport]:
    engine = engine or EngineConfig()
    plan = plan or plan_shannon(p.n, eps, engine)
    report = _run(p, plan, rng, backend, engine, purification, seed)
    return report.estimate, report


def renyi_plan_for(p: Distribution, alpha: float, eps: float, engine: Optional[EngineConfig] = None) -> LevelPlan:
    if not 0 < alpha < 1:
        raise UnsupportedError(f"Renyi order must lie in (0, 1), got {alpha}")
    return plan_tsallis_lt1(alpha, p.n, (1.0 - alpha) * eps, engine)


def estimate_renyi(
    p: Distribution,
    alpha: float,
    eps: float,
    rng: np.random.Generator,
    backend: Backend = Backend.BLOCK,
    engine: Optional[EngineConfig] = None,
    plan: Optional[LevelPlan] = None,
    purification: Purification = Purification.FIXED,
    seed: int = 0,
) -> Tuple[float, EstimateReport]:
    """
    Estimate R_alpha(p) = ln(F_alpha)/(1 - alpha) for alpha in (0, 1).

    F_alpha is estimated to (1 - alpha) eps; since F_alpha >= 1 the estimate is
    clipped to 1 before the logarithm.
    """
    if not 0 < alpha < 1:
        raise UnsupportedError(f"Renyi order must lie in (0, 1), got {alpha}")
    engine = engine or EngineConfig()
    plan = plan or renyi_plan_for(p, alpha, eps, engine)
    report = _run(p, plan, rng, backend, engine, purification, seed)
    return math.log(max(report.estimate, 1.0)) / (1.0 - alpha), report


def _empirical(samples: Sequence[int]) -> np.ndarray:
    values = np.asarray(samples)
    if values.size == 0:
        raise InvalidArgumentError("Plug-in estimates need at least one sample")
    if values.ndim != 1 or not np.issubdtype(values.dtype, np.integer) or np.any(values < 0):
        raise InvalidArgumentError("Samples must be non-negative integer indices")
    counts = np.bincount(values)
    counts = counts[counts > 0]
    return counts / values.size


def classical_plugin_estimate(samples: Sequence[int], q: float) -> float:
    """Tsallis entropy of the empirical distribution of ``samples``."""
    if q <= 0 or q == 1:
        raise InvalidArgumentError(f"q must be positive and != 1, got {q}")
    freqs = _empirical(samples)
    return float((np.sum(freqs ** q) - 1.0) / (1.0 - q))


def plugin_shannon(samples: Sequence[int]) -> float:
    freqs = _empirical(samples)
    return float(-np.sum(freqs * np.log(freqs)))


def plugin_renyi(samples: Sequence[int], alpha: float) -> float:
    if alpha <= 0 or alpha == 1:
        raise InvalidArgumentError(f"Renyi order must be positive and != 1, got {alpha}")
    freqs = _empirical(samples)
    return float(np.log(np.sum(freqs ** alpha)) / (1.0 - alpha))


def predicted_exponents(q: float) -> Dict[str, float]:
    """
    Headline query exponents for T_q, up to polylogarithmic factors.

    q > 1: (1/eps)^max{1/(2(q-1)), 1}, no n dependence.
    0 < q < 1: n^(1/q - 1/2) / eps^(1/q).
    q = 1 (Shannon): sqrt(n) / eps.
    """
    if q <= 0:
        raise InvalidArgumentError(f"q must be positive, got {q}")
    if q > 1:
        return {"eps": max(1.0 / (2.0 * (q - 1.0)), 1.0), "n": 0.0}
    if q < 1:
        return {"eps": 1.0 / q, "n": 1.0 / q - 0.5}
    return {"eps": 1.0, "n": 0.5}
