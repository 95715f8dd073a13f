"""
Multi-Level Service
The multi-level estimation engine. Level j isolates the indices whose sqrt(p_i)
falls near (phi_j, phi_{j-1}] with two discriminators, weights them with the
polynomial P_j, and estimates the resulting squared norm by amplitude
estimation; the scaled level estimates add up to sum_i p_i g(p_i).

Two backends compute the level amplitudes:

- block: closed form over (i, nu) labels, or the literal branch pipeline
- dense: explicit vectors for n <= 8
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import AESettings, Backend, DiscriminatorSettings, Purification
from src.exceptions import InvalidArgumentError
from src.services.amplitude_estimation_service import two_stage_ae
from src.services.discriminator_service import (
    DiscriminatorConfig,
    apply_discriminator,
    apply_discriminator_dense,
    discriminator_cost,
    xi_table,
)
from src.services.distribution_service import Distribution, count_neighborhood, exact_functional
from src.services.encoding_service import (
    HADAMARD,
    DenseState,
    DenseSystem,
    build_dense_system,
    build_encoding,
    dense_reference_state,
    initial_branch_state,
)
from src.services.ledger import QueryLedger
from src.services.polynomial_service import ChebPoly, cap_max, evaluate
from src.services.svt_service import apply_svt, apply_svt_dense, branch_values

logger = logging.getLogger(__name__)

ROUNDOFF = 1e-10
CONDITION_ULPS = 64
CONDITION_GRID = 2048


@dataclass(frozen=True)
class FunctionalSpec:
    """Target g with g(x) = f(x)/x, its tail constant C and interval bounds B_j"""

    name: str
    g: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    C: float
    bound: Callable[[int], float] = field(repr=False, compare=False)
    params: Dict[str, float] = field(default_factory=dict, compare=False)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "C": self.C, "params": dict(self.params)}


@dataclass(frozen=True, eq=False)
class LevelPlan:
    """
    Parameter schedule of a multi-level estimate.

    ``phis`` holds phi_0..phi_{m+1}; ``bounds`` holds B_0..B_{m+2} with
    B_0 = B_{m+2} = 0; ``polys``, ``eps1s`` and ``eps2s`` are indexed by level - 1.
    """

    m: int
    rho: float
    phis: Tuple[float, ...]
    bounds: Tuple[float, ...]
    polys: Tuple[ChebPoly, ...]
    eps1s: Tuple[float, ...]
    eps2s: Tuple[float, ...]
    functional: FunctionalSpec
    eps: float
    n: Optional[int] = None
    poly_eps: Tuple[float, ...] = ()
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.m < 1:
            raise InvalidArgumentError("A plan needs at least one level")
        if len(self.phis) != self.m + 2 or len(self.bounds) != self.m + 3:
            raise InvalidArgumentError("phis and bounds must cover levels 0..m+1 and 0..m+2")
        if len(self.polys) != self.m or len(self.eps1s) != self.m or len(self.eps2s) != self.m:
            raise InvalidArgumentError("One polynomial and one precision pair per level")
        if self.phis[0] != 1.0 or any(b >= a for a, b in zip(self.phis, self.phis[1:])):
            raise InvalidArgumentError("phi_j must start at 1 and decrease strictly")
        if len({poly.parity for poly in self.polys}) != 1:
            raise InvalidArgumentError("All level polynomials must share one parity")

    @property
    def C(self) -> float:
        return self.functional.C

    def level_bound(self, j: int) -> float:
        """max{B_j, B_{j+1}}."""
        return max(self.bounds[j], self.bounds[j + 1])

    def local_max_bound(self, j: int) -> float:
        """max{B_{j-1}, B_j, B_{j+1}, B_{j+2}}."""
        return max(self.bounds[j - 1 : j + 3])

    def poly(self, j: int) -> ChebPoly:
        self._check_level(j)
        return self.polys[j - 1]

    def discriminator(self, j: int, settings: Optional[DiscriminatorSettings] = None) -> DiscriminatorConfig:
        """D_j: threshold phi_j/2, gap ratio rho."""
        self._check_level(j)
        return DiscriminatorConfig.for_level(
            self.phis[j] / 2.0, self.rho, self.eps1s[j - 1], self.eps2s[j - 1], settings, stream=j,
        )

    def ae_precision(self, j: int) -> float:
        return min(1.0, self.eps / (6.0 * self.m * self.level_bound(j)))

    def _check_level(self, j: int) -> None:
        if not 1 <= j <= self.m:
            raise InvalidArgumentError(f"Level {j} outside 1..{self.m}")

    def to_dict(self, include_coefficients: bool = True) -> Dict[str, Any]:
        polys = [poly.to_dict() for poly in self.polys]
        if not include_coefficients:
            for entry in polys:
                entry.pop("coeffs")
        return {
            "m": self.m,
            "rho": self.rho,
            "eps": self.eps,
            "n": self.n,
            "functional": self.functional.to_dict(),
            "phis": list(self.phis),
            "bounds": list(self.bounds),
            "eps1s": list(self.eps1s),
            "eps2s": list(self.eps2s),
            "poly_eps": list(self.poly_eps),
            "polys": polys,
            "params": dict(self.params),
        }


def discriminator_precisions(bounds: Sequence[float], m: int, eps: float) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
    """eps1_j = min{1, eps/(24m B*)}, eps2_j = min{1, eps/(6m B*)} with B* = max{B_j, B_{j+1}, B_{j+2}}."""
    eps1s, eps2s = [], []
    for j in range(1, m + 1):
        top = max(bounds[j : j + 3])
        eps1s.append(min(1.0, eps / (24.0 * m * top)) if top > 0 else 1.0)
        eps2s.append(min(1.0, eps / (6.0 * m * top)) if top > 0 else 1.0)
    return tuple(eps1s), tuple(eps2s)


def build_level_plan(
    functional: FunctionalSpec,
    polys: Sequence[ChebPoly],
    eps: float,
    rho: float = 2.0,
    bounds: Optional[Sequence[float]] = None,
    n: Optional[int] = None,
    poly_eps: Sequence[float] = (),
    params: Optional[Dict[str, Any]] = None,
) -> LevelPlan:
    """
    Assemble a plan from per-level polynomials.

    Bounds default to functional.bound(j) for j = 1..m+1 with B_0 = B_{m+2} = 0.
    """
    m = len(polys)
    if m < 1:
        raise InvalidArgumentError("A plan needs at least one level")
    if bounds is None:
        bounds = [0.0] + [float(functional.bound(j)) for j in range(1, m + 2)] + [0.0]
    bounds = tuple(float(b) for b in bounds)
    phis = tuple(float(rho) ** (-j) for j in range(m + 2))
    eps1s, eps2s = discriminator_precisions(bounds, m, eps)
    return LevelPlan(
        m=m, rho=float(rho), phis=phis, bounds=bounds, polys=tuple(polys), eps1s=eps1s, eps2s=eps2s,
        functional=functional, eps=float(eps), n=n, poly_eps=tuple(poly_eps), params=dict(params or {}),
    )


# Sabotage hooks for negative controls
def scale_bounds(plan: LevelPlan, factor: float) -> LevelPlan:
    return replace(plan, bounds=tuple(b * factor for b in plan.bounds))


def truncate_levels(plan: LevelPlan, k: int) -> LevelPlan:
    m = plan.m - k
    if m < 1:
        raise InvalidArgumentError(f"Cannot drop {k} of {plan.m} levels")
    return replace(
        plan, m=m, phis=plan.phis[: m + 2], bounds=plan.bounds[: m + 2] + (0.0,), polys=plan.polys[:m],
        eps1s=plan.eps1s[:m], eps2s=plan.eps2s[:m], poly_eps=plan.poly_eps[:m],
    )


def with_polys(plan: LevelPlan, polys: Sequence[ChebPoly]) -> LevelPlan:
    return replace(plan, polys=tuple(polys))


@dataclass(frozen=True, eq=False)
class BetaWeights:
    """|beta_{i,j}|^2 for levels 1..m (column j-1), nu-averaged, plus the per-nu values"""

    weights: np.ndarray = field(repr=False)
    by_nu: np.ndarray = field(repr=False)

    def weight(self, i: int, j: int) -> float:
        return 0.0 if j == 0 else float(self.weights[i, j - 1])

    def to_dict(self) -> Dict[str, Any]:
        return {"weights": self.weights.tolist()}


def _flag_tables(sigmas: np.ndarray, plan: LevelPlan, settings: Optional[DiscriminatorSettings]) -> np.ndarray:
    """xi for D_1..D_m as an (m, n, 2, 2) array."""
    return np.stack([xi_table(sigmas, plan.discriminator(j, settings)) for j in range(1, plan.m + 1)])


def beta_weights(p: Distribution, plan: LevelPlan, settings: Optional[DiscriminatorSettings] = None) -> BetaWeights:
    """
    Attribution weights of every index to every level.

    Level 1 keeps |<0|xi_1>|^2 (D_0 is the identity); level j >= 2 keeps
    |<1|xi_{j-1}>|^2 |<0|xi_j>|^2.
    """
    sigmas = build_encoding(p).sigmas
    flags = np.abs(_flag_tables(sigmas, plan, settings)) ** 2  # [level, i, nu, component]
    by_nu = np.empty((p.n, plan.m, 2))
    by_nu[:, 0, :] = flags[0, :, :, 0]
    for j in range(2, plan.m + 1):
        by_nu[:, j - 1, :] = flags[j - 2, :, :, 1] * flags[j - 1, :, :, 0]
    return BetaWeights(weights=by_nu.mean(axis=2), by_nu=by_nu)


def level_amplitudes(p: Distribution, plan: LevelPlan, settings: Optional[DiscriminatorSettings] = None) -> np.ndarray:
    """Closed-form ||Pi_j V_j |Psi_in>||^2 for j = 1..m."""
    spec = build_encoding(p)
    betas = beta_weights(p, plan, settings).by_nu
    amplitudes = np.empty(plan.m)
    for j in range(1, plan.m + 1):
        values = branch_values(plan.poly(j), spec) ** 2
        amplitudes[j - 1] = float(np.sum((p.probs / 2.0)[:, None] * betas[:, j - 1, :] * values))
    return amplitudes


def level_true_amplitude(
    p: Distribution, plan: LevelPlan, j: int, settings: Optional[DiscriminatorSettings] = None
) -> float:
    """sum_i (p_i/2) sum_nu |beta_{i,j,nu}|^2 P_j(nu sigma_i)^2."""
    plan._check_level(j)
    spec = build_encoding(p)
    flags = np.abs(xi_table(spec.sigmas, plan.discriminator(j, settings))) ** 2
    overlap = flags[:, :, 0]
    if j >= 2:
        overlap = overlap * (np.abs(xi_table(spec.sigmas, plan.discriminator(j - 1, settings))) ** 2)[:, :, 1]
    values = branch_values(plan.poly(j), spec) ** 2
    return float(np.sum((p.probs / 2.0)[:, None] * overlap * values))


def _project_block(registers: np.ndarray, j: int) -> float:
    plus = registers[:, :, 0]  # [i, nu, b, c, d]
    kept = plus[:, :, :, :, 0] if j == 1 else plus[:, :, :, 1, 0]
    return float(np.sum(np.abs(kept) ** 2))


def pipeline_level_amplitude(
    p: Distribution, plan: LevelPlan, j: int, settings: Optional[DiscriminatorSettings] = None
) -> Tuple[float, float, int]:
    """
    Run initial state, D_{j-1} on c, D_j on d, W_j and Pi_j on branch states.

    Returns:
        (amplitude, leakage, queries of one V_j application)
    """
    plan._check_level(j)
    spec = build_encoding(p)
    state = initial_branch_state(p)
    if j >= 2:
        state = apply_discriminator(state, plan.discriminator(j - 1, settings), "c", spec)
    state = apply_discriminator(state, plan.discriminator(j, settings), "d", spec)
    state, leakage = apply_svt(plan.poly(j), spec, state)
    return _project_block(state.registers(), j), leakage.total, state.queries


def _project_dense(state: DenseState, j: int) -> float:
    vector = np.einsum("xa,xbcds->abcds", HADAMARD, state.vector)
    plus = vector[0]  # [b, c, d, s]
    kept = plus[:, :, 0, :] if j == 1 else plus[:, 1, 0, :]
    return float(np.sum(np.abs(kept[..., state.system.pi_h_mask]) ** 2))


def dense_level_amplitude(
    p: Distribution, plan: LevelPlan, j: int, settings: Optional[DiscriminatorSettings] = None,
    system: Optional[DenseSystem] = None, purification: Purification = Purification.FIXED, seed: int = 0,
) -> float:
    """The same pipeline on explicit vectors, projected with the explicit Pi_H."""
    plan._check_level(j)
    system = system or build_dense_system(p, purification, seed)
    state = dense_reference_state(p, system=system)
    if j >= 2:
        state = apply_discriminator_dense(state, plan.discriminator(j - 1, settings), "c")
    state = apply_discriminator_dense(state, plan.discriminator(j, settings), "d")
    state, _ = apply_svt_dense(plan.poly(j), state)
    return _project_dense(state, j)


def level_costs(plan: LevelPlan, settings: Optional[DiscriminatorSettings] = None) -> List[Dict[str, int]]:
    """Oracle queries of one V_j: 1 state preparation + cost(D_{j-1}) + cost(D_j) + deg(P_j)."""
    costs = []
    for j in range(1, plan.m + 1):
        previous = discriminator_cost(plan.discriminator(j - 1, settings)) if j >= 2 else 0
        costs.append({
            "state_prep": 1,
            "discriminator_prev": previous,
            "discriminator_curr": discriminator_cost(plan.discriminator(j, settings)),
            "svt": plan.poly(j).degree,
        })
    return costs


@dataclass(frozen=True)
class EstimateReport:
    """Final estimate S = sum_j max{B_j, B_{j+1}} v~_j with its per-level parts and ledger"""

    estimate: float
    per_level: Tuple[Dict[str, Any], ...]
    ledger: QueryLedger = field(compare=False)
    diagnostics: Optional[Dict[str, Any]] = None

    @property
    def v_tildes(self) -> List[float]:
        return [level["v_tilde"] for level in self.per_level]

    @property
    def queries_total(self) -> int:
        return self.ledger.total

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "estimate": self.estimate,
            "per_level": [dict(level) for level in self.per_level],
            "queries_total": self.ledger.total,
            "queries_by_level": {str(k): v for k, v in self.ledger.by_level().items()},
            "ledger": self.ledger.to_dict(),
        }
        if self.diagnostics is not None:
            data["diagnostics"] = self.diagnostics
        return data


def run_estimate(
    p: Distribution,
    plan: LevelPlan,
    rng: np.random.Generator,
    backend: Backend = Backend.BLOCK,
    settings: Optional[DiscriminatorSettings] = None,
    ae_settings: Optional[AESettings] = None,
    purification: Purification = Purification.FIXED,
    seed: int = 0,
    diagnostics: bool = False,
) -> EstimateReport:
    """
    Estimate sum_i p_i g(p_i) with the plan's levels.

    Args:
        p: Distribution queried through the purified oracle
        plan: Certified level plan
        rng: Stream owned by this trial
        backend: block (closed form) or dense (explicit vectors, n <= 8)
        settings: Discriminator profile and cost constants
        ae_settings: Amplitude-estimation simulation knobs
        purification: Dense-backend purification mode
        seed: Seed of random purifications
        diagnostics: Attach beta weights and leakage per level

    Returns:
        EstimateReport
    """
    backend = Backend(backend)
    if backend == Backend.DENSE:
        system = build_dense_system(p, purification, seed)
        amplitudes = np.array([dense_level_amplitude(p, plan, j, settings, system) for j in range(1, plan.m + 1)])
    else:
        amplitudes = level_amplitudes(p, plan, settings)

    ledger = QueryLedger()
    eta = 1.0 / (3.0 * plan.m)
    total = 0.0
    per_level = []
    for j, cost in enumerate(level_costs(plan, settings), start=1):
        cost_per_call = sum(cost.values())
        precision = plan.ae_precision(j)
        result = two_stage_ae(float(amplitudes[j - 1]), precision, eta, rng, cost_per_call, ae_settings)
        entry = ledger.record_level(j, cost["state_prep"], cost["discriminator_prev"], cost["discriminator_curr"], cost["svt"], result.rounds)
        weight = plan.level_bound(j)
        total += weight * result.estimate
        per_level.append({
            "level": j,
            "v_tilde": result.estimate,
            "true_amplitude": float(amplitudes[j - 1]),
            "weight": weight,
            "ae_precision": precision,
            "returned_zero": result.returned_zero,
            "queries": entry.queries,
        })
    logger.debug(f"run_estimate m={plan.m} backend={backend.value}: S={total:.6g}, {ledger.total} queries")

    extra = None
    if diagnostics:
        extra = estimate_diagnostics(p, plan, settings)
    return EstimateReport(estimate=total, per_level=tuple(per_level), ledger=ledger, diagnostics=extra)


def estimate_diagnostics(p: Distribution, plan: LevelPlan, settings: Optional[DiscriminatorSettings] = None) -> Dict[str, Any]:
    betas = beta_weights(p, plan, settings)
    leakage = [pipeline_level_amplitude(p, plan, j, settings)[1] for j in range(1, plan.m + 1)]
    return {"beta_weights": betas.weights.tolist(), "leakage_by_level": leakage}


# Condition checks
@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    margin: float
    detail: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "passed": self.passed, "margin": self.margin, "detail": self.detail}


def _interval_points(lo: float, hi: float, poly: ChebPoly) -> np.ndarray:
    size = CONDITION_GRID if poly.is_surrogate else max(CONDITION_GRID, min(8 * poly.degree, 65536))
    grid = np.union1d(np.linspace(lo, hi, size), np.geomspace(lo, hi, size))
    return grid[grid > lo] if lo > 0 else grid


def _g_squared(plan: LevelPlan, x: np.ndarray) -> np.ndarray:
    return np.asarray(plan.functional.g(x ** 2), dtype=float)


def check_cap(plan: LevelPlan) -> ConditionResult:
    """|P_j| <= 1 on [-1, 1] for every level."""
    peaks = [cap_max(poly)[0] for poly in plan.polys]
    worst = max(peaks)
    return ConditionResult("cap", worst <= 1.0 + 1e-9, 1.0 - worst, {"cap_max": peaks})


def check_bounds(plan: LevelPlan) -> ConditionResult:
    """B_j >= 2 max |g(x^2)| on (phi_j, phi_{j-1}] for j = 1..m+1."""
    margins = []
    for j in range(1, plan.m + 2):
        lo, hi = plan.phis[j], plan.phis[j - 1]
        grid = np.geomspace(lo, hi, CONDITION_GRID)[1:]
        peak = float(np.max(np.abs(_g_squared(plan, grid))))
        margins.append(plan.bounds[j] - 2.0 * peak * (1.0 - 1e-12))
    worst = min(margins)
    return ConditionResult("bounds", worst >= 0, worst, {"margins": margins})


def check_local_approximation(plan: LevelPlan) -> ConditionResult:
    """
    |max{B_j, B_{j+1}} P_j(x/2)^2 - g(x^2)| <= eps/(12m) on (phi_{j+1}, phi_{j-1}].

    Deviations are compared after subtracting a float64 evaluation allowance of
    CONDITION_ULPS ulps of |g(x^2)|; deep levels where the allowance is the
    larger term are listed as roundoff limited.
    """
    tol = plan.eps / (12.0 * plan.m)
    margins, limited = [], []
    for j in range(1, plan.m + 1):
        poly = plan.poly(j)
        grid = _interval_points(plan.phis[j + 1], plan.phis[j - 1], poly)
        target = _g_squared(plan, grid)
        scaled = plan.level_bound(j) * np.asarray(evaluate(poly, grid / 2.0)) ** 2
        allowance = CONDITION_ULPS * np.finfo(float).eps * np.abs(target)
        deviation = np.maximum(np.abs(scaled - target) - allowance, 0.0)
        margins.append(tol - float(np.max(deviation)))
        if float(np.max(allowance)) > tol:
            limited.append(j)
    worst = min(margins)
    return ConditionResult("local_approximation", worst >= 0, worst, {"tolerance": tol, "margins": margins, "roundoff_limited": limited})


def check_last_level(plan: LevelPlan) -> ConditionResult:
    """B_m P_m(x/2)^2 <= C |g(x^2)| on (phi_{m+1}, phi_m]."""
    m = plan.m
    poly = plan.poly(m)
    grid = _interval_points(plan.phis[m + 1], plan.phis[m], poly)
    target = plan.C * np.abs(_g_squared(plan, grid))
    scaled = plan.bounds[m] * np.asarray(evaluate(poly, grid / 2.0)) ** 2
    allowance = CONDITION_ULPS * np.finfo(float).eps * np.maximum(target, scaled)
    margin = float(np.min(target + allowance - scaled))
    return ConditionResult("last_level", margin >= 0, margin)


def tail_mass(plan: LevelPlan, p: Distribution) -> float:
    """sum of p_i |g(p_i)| over indices with sqrt(p_i) <= phi_m."""
    tail = p.probs[(p.sqrt_probs <= plan.phis[plan.m]) & (p.probs > 0)]
    return float(np.sum(tail * np.abs(plan.functional.g(tail)))) if tail.size else 0.0


def worst_tail_mass(plan: LevelPlan, n: Optional[int]) -> float:
    """
    Largest tail sum over distributions on n points with every sqrt(p_i) <= phi_m.

    Packs floor(1/phi_m^2) masses at the cap (convex g) or spreads mass evenly
    (concave g) and keeps the larger; n = None allows any support size.
    """
    cap = plan.phis[plan.m] ** 2

    def h(x: float) -> float:
        return 0.0 if x <= 0 else float(x * abs(float(np.asarray(plan.functional.g(np.array([x])))[0])))

    full = int(math.floor(1.0 / cap))
    packed_count = full if n is None else min(n, full)
    remainder = 0.0 if n is not None and n <= full else min(cap, 1.0 - packed_count * cap)
    packed = packed_count * h(cap) + h(remainder)
    spread = n * h(min(cap, 1.0 / n)) if n is not None else 0.0
    return max(packed, spread)


def check_tail(plan: LevelPlan, p: Optional[Distribution] = None) -> ConditionResult:
    """Tail condition against a supplied distribution, or the worst case at the planner's n."""
    limit = plan.eps / (3.0 * (1.0 + plan.C))
    if p is not None:
        value, source = tail_mass(plan, p), "distribution"
    else:
        value, source = worst_tail_mass(plan, plan.n), "worst_case"
    return ConditionResult("tail", value <= limit, limit - value, {"tail": value, "limit": limit, "source": source})


@dataclass(frozen=True)
class BudgetReport:
    """Deterministic (amplitude-estimation free) error of a plan on one distribution"""

    deterministic_estimate: float
    exact: float
    error: float
    limit: float
    localization_ok: bool
    completeness_ok: bool
    localization_margin: float
    completeness_margin: float
    approximation: ConditionResult
    violations: Tuple[Dict[str, Any], ...] = ()

    @property
    def passed(self) -> bool:
        return bool(self.error <= self.limit and self.localization_ok and self.completeness_ok and self.approximation.passed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "deterministic_estimate": self.deterministic_estimate,
            "exact": self.exact,
            "error": self.error,
            "limit": self.limit,
            "localization_ok": self.localization_ok,
            "completeness_ok": self.completeness_ok,
            "localization_margin": self.localization_margin,
            "completeness_margin": self.completeness_margin,
            "approximation": self.approximation.to_dict(),
            "violations": list(self.violations),
            "passed": self.passed,
        }


def beta_inequalities(
    p: Distribution, plan: LevelPlan, settings: Optional[DiscriminatorSettings] = None, max_violations: int = 20
) -> Dict[str, Any]:
    """
    Localization: |beta_{i,j}|^2 <= eps/(3m max{B_j, B_{j+1}}) when sqrt(p_i) lies in
    [0, phi_{j+1}] or (phi_{j-1}, 1]. Completeness: |beta_{i,j-1}|^2 + |beta_{i,j}|^2
    is within eps/(3m B_j) of 1 when sqrt(p_i) lies in [phi_j, phi_{j-1}].
    """
    betas = beta_weights(p, plan, settings)
    roots = p.sqrt_probs
    loc_margin, comp_margin = math.inf, math.inf
    violations: List[Dict[str, Any]] = []
    for j in range(1, plan.m + 1):
        column = betas.weights[:, j - 1]
        outside = (roots <= plan.phis[j + 1]) | (roots > plan.phis[j - 1])
        if np.any(outside):
            limit = plan.eps / (3.0 * plan.m * plan.level_bound(j))
            margins = limit + ROUNDOFF - column[outside]
            loc_margin = min(loc_margin, float(np.min(margins)))
            for i in np.flatnonzero(outside)[margins < 0][:max_violations]:
                violations.append({"kind": "localization", "i": int(i), "level": j, "weight": float(column[i])})
        inside = (roots >= plan.phis[j]) & (roots <= plan.phis[j - 1])
        if np.any(inside) and plan.bounds[j] > 0:
            previous = betas.weights[:, j - 2] if j >= 2 else np.zeros(p.n)
            total = previous[inside] + column[inside]
            limit = plan.eps / (3.0 * plan.m * plan.bounds[j])
            margins = limit + ROUNDOFF - np.abs(total - 1.0)
            comp_margin = min(comp_margin, float(np.min(margins)))
            for i in np.flatnonzero(inside)[margins < 0][:max_violations]:
                violations.append({"kind": "completeness", "i": int(i), "level": j})
    return {
        "localization_margin": loc_margin,
        "completeness_margin": comp_margin,
        "localization_ok": loc_margin >= 0,
        "completeness_ok": comp_margin >= 0,
        "violations": violations[:max_violations],
    }


def verify_error_budget(
    p: Distribution, plan: LevelPlan, settings: Optional[DiscriminatorSettings] = None,
    approximation: Optional[ConditionResult] = None,
) -> BudgetReport:
    """
    Check |sum_j max{B_j,B_{j+1}} a_j - sum_i p_i g(p_i)| <= 2 eps/3 and the beta inequalities.

    ``approximation`` reuses a local-approximation check already run on this plan.
    """
    amplitudes = level_amplitudes(p, plan, settings)
    deterministic = sum(plan.level_bound(j) * float(amplitudes[j - 1]) for j in range(1, plan.m + 1))
    exact = exact_functional(p, plan.functional.g)
    inequalities = beta_inequalities(p, plan, settings)
    report = BudgetReport(
        deterministic_estimate=deterministic,
        exact=exact,
        error=abs(deterministic - exact),
        limit=2.0 * plan.eps / 3.0,
        localization_ok=inequalities["localization_ok"],
        completeness_ok=inequalities["completeness_ok"],
        localization_margin=inequalities["localization_margin"],
        completeness_margin=inequalities["completeness_margin"],
        approximation=approximation or check_local_approximation(plan),
        violations=tuple(inequalities["violations"]),
    )
    if not report.passed:
        logger.debug(f"Budget check failed for {plan.functional.name}: error {report.error:.3e} limit {report.limit:.3e}")
    return report


def predicted_query_bound(plan: LevelPlan, p: Distribution) -> float:
    """
    sum_j log(m) log(m B*_j/eps) (m B*_j sqrt(n_j)/eps + sqrt(m B*_j/eps)/phi_{j+1}),
    B*_j the local maximum bound; both logarithms are floored at 1.
    """
    total = 0.0
    log_m = max(1.0, math.log(plan.m))
    for j in range(1, plan.m + 1):
        local = plan.local_max_bound(j)
        ratio = plan.m * local / plan.eps
        n_j = count_neighborhood(p, plan.rho, j)
        total += log_m * max(1.0, math.log(max(ratio, 1.0))) * (ratio * math.sqrt(n_j) + math.sqrt(ratio) / plan.phis[j + 1])
    return total
