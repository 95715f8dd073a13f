"""
Experiment Service
Batch runs behind the qmle commands: seeded trial fan-out, scaling sweeps
with log-log fits, the verification battery, backend comparison and
polynomial certification.

Trials and plan checks run concurrently on worker threads; results are
always re-ordered by their index, so outputs do not depend on scheduling.
"""

import asyncio
import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from src.config import (
    Backend,
    CertifyConfig,
    CompareConfig,
    DistributionConfig,
    DistributionKind,
    EngineConfig,
    EstimateConfig,
    FunctionalConfig,
    FunctionalKind,
    PolyKind,
    Profile,
    Purification,
    SweepConfig,
    VerifyConfig,
)
from src.exceptions import PlanConditionsError
from src.services.distribution_service import (
    Distribution,
    exact_renyi,
    exact_shannon,
    exact_tsallis,
    load_distribution,
    make_random,
    make_uniform,
    make_zipf,
)
from src.services.encoding_service import build_dense_system
from src.services.entropy_service import (
    estimate_renyi,
    estimate_shannon,
    estimate_tsallis,
    plan_shannon,
    plan_tsallis,
    predicted_exponents,
    renyi_plan_for,
    tsallis_plan_for,
    verify_plan_conditions,
)
from src.services.multilevel_service import (
    EstimateReport,
    LevelPlan,
    check_tail,
    dense_level_amplitude,
    estimate_diagnostics,
    level_amplitudes,
    pipeline_level_amplitude,
    predicted_query_bound,
    scale_bounds,
    verify_error_budget,
)
from src.services.polynomial_service import build_neg_power, build_pos_power, build_sqrt_log
from src.utils import fit_loglog_slope, seed_stream

logger = logging.getLogger(__name__)

RANDOM_DISTRIBUTION_STREAM = 101
COMPARE_STREAM = 202
SWEEP_COLUMNS = ["q", "n", "eps", "seed", "queries_total", "abs_error", "success"]


def build_distribution(cfg: DistributionConfig, seed: int = 0) -> Distribution:
    """Materialize the configured distribution; random draws use their own seed stream."""
    if cfg.kind == DistributionKind.FILE:
        return load_distribution(cfg.path)
    if cfg.kind == DistributionKind.UNIFORM:
        return make_uniform(cfg.n)
    if cfg.kind == DistributionKind.ZIPF:
        return make_zipf(cfg.n, cfg.s)
    return make_random(cfg.n, seed_stream(seed, RANDOM_DISTRIBUTION_STREAM))


def exact_value(p: Distribution, functional: FunctionalConfig) -> float:
    if functional.kind == FunctionalKind.TSALLIS:
        return exact_tsallis(p, functional.q)
    if functional.kind == FunctionalKind.SHANNON:
        return exact_shannon(p)
    return exact_renyi(p, functional.alpha)


def plan_for(p: Distribution, functional: FunctionalConfig, eps: float, engine: EngineConfig) -> LevelPlan:
    """The plan an estimate of ``functional`` at precision eps runs on."""
    if functional.kind == FunctionalKind.TSALLIS:
        return tsallis_plan_for(p, functional.q, eps, engine)
    if functional.kind == FunctionalKind.SHANNON:
        return plan_shannon(p.n, eps, engine)
    return renyi_plan_for(p, functional.alpha, eps, engine)


def estimate_once(
    p: Distribution, functional: FunctionalConfig, eps: float, plan: LevelPlan, rng: np.random.Generator,
    engine: EngineConfig, backend: Backend = Backend.BLOCK, purification: Purification = Purification.FIXED,
) -> Tuple[float, EstimateReport]:
    kwargs = dict(backend=backend, engine=engine, plan=plan, purification=purification, seed=engine.seed)
    if functional.kind == FunctionalKind.TSALLIS:
        return estimate_tsallis(p, functional.q, eps, rng, **kwargs)
    if functional.kind == FunctionalKind.SHANNON:
        return estimate_shannon(p, eps, rng, **kwargs)
    return estimate_renyi(p, functional.alpha, eps, rng, **kwargs)


@dataclass
class TrialResult:
    trial: int
    seed: int
    value: float
    exact: float
    eps: float
    report: EstimateReport

    @property
    def abs_error(self) -> float:
        return abs(self.value - self.exact)

    @property
    def success(self) -> bool:
        return self.abs_error <= self.eps

    def to_dict(self) -> Dict[str, Any]:
        return {
            "trial": self.trial,
            "seed": self.seed,
            "value": self.value,
            "exact": self.exact,
            "abs_error": self.abs_error,
            "success": self.success,
            "report": self.report.to_dict(),
        }


@dataclass
class EstimateRun:
    """Everything the estimate command writes"""

    plan: LevelPlan
    trials: List[TrialResult]
    summary: Dict[str, Any]


def summarize_trials(trials: List[TrialResult]) -> Dict[str, Any]:
    values = np.array([t.value for t in trials])
    queries = np.array([t.report.queries_total for t in trials])
    successes = sum(1 for t in trials if t.success)
    return {
        "trials": len(trials),
        "successes": successes,
        "success_fraction": successes / len(trials),
        "mean_estimate": float(np.mean(values)),
        "median_estimate": float(np.median(values)),
        "mean_abs_error": float(np.mean([t.abs_error for t in trials])),
        "mean_queries": float(np.mean(queries)),
        "max_queries": int(np.max(queries)),
    }


class ExperimentService:
    """Runs seeded batches concurrently with at most ``workers`` threads in flight"""

    def __init__(self, workers: int = 4):
        self.workers = workers

    async def _bounded(self, semaphore: asyncio.Semaphore, func, *args):
        async with semaphore:
            return await asyncio.to_thread(func, *args)

    async def gather_ordered(self, func, jobs: List[tuple]) -> List[Any]:
        """Run func(*job) for every job; results come back in job order, first failure re-raised."""
        semaphore = asyncio.Semaphore(self.workers)
        tasks = [self._bounded(semaphore, func, *job) for job in jobs]
        results = await asyncio.gather(*tasks, return_exceptions=True)
        for index, result in enumerate(results):
            if isinstance(result, Exception):
                logger.error(f"Job {index} failed: {result}")
                raise result
        return list(results)

    async def run_trials(
        self, p: Distribution, functional: FunctionalConfig, eps: float, plan: LevelPlan,
        trials: int, seed: int, engine: EngineConfig, backend: Backend = Backend.BLOCK,
        purification: Purification = Purification.FIXED,
    ) -> List[TrialResult]:
        exact = exact_value(p, functional)

        def one(trial: int) -> TrialResult:
            rng = seed_stream(seed, trial)
            value, report = estimate_once(p, functional, eps, plan, rng, engine, backend, purification)
            return TrialResult(trial=trial, seed=seed, value=value, exact=exact, eps=eps, report=report)

        results = await self.gather_ordered(one, [(t,) for t in range(trials)])
        return sorted(results, key=lambda r: r.trial)

    async def run_estimate(self, config: EstimateConfig) -> EstimateRun:
        """
        Plan once, check the plan against the distribution, then run the trials.

        Args:
            config: Resolved estimate configuration

        Returns:
            EstimateRun with the plan, ordered trials and the summary
        """
        p = build_distribution(config.distribution, config.seed)
        plan = plan_for(p, config.functional, config.eps, config)
        conditions = verify_plan_conditions(plan, p)
        if not conditions.passed:
            logger.error(f"Plan for {config.functional.kind.value} fails: {', '.join(conditions.failed())}")
            raise PlanConditionsError("Plan fails its conditions", failed=tuple(conditions.failed()))
        trials = await self.run_trials(
            p, config.functional, config.eps, plan, config.trials, config.seed, config,
            config.backend, config.purification,
        )
        summary = summarize_trials(trials)
        summary.update({
            "functional": config.functional.kind.value,
            "exact": trials[0].exact,
            "eps": config.eps,
            "n": p.n,
            "m": plan.m,
            "plan_conditions": conditions.to_dict(),
            "predicted_query_bound": predicted_query_bound(plan, p),
            "diagnostics": estimate_diagnostics(p, plan, config.discriminator),
            "config": config.model_dump(mode="json"),
        })
        logger.info(
            f"estimate {config.functional.kind.value}: {summary['successes']}/{summary['trials']} "
            f"within eps={config.eps}, mean queries {summary['mean_queries']:.4g}"
        )
        return EstimateRun(plan=plan, trials=trials, summary=summary)

    async def run_sweep(self, config: SweepConfig) -> Tuple[pd.DataFrame, Dict[str, Any]]:
        """One row per (n, eps, trial) plus log-log fits of the mean query counts."""
        functional = FunctionalConfig(kind=FunctionalKind.TSALLIS, q=config.q)
        jobs = []
        for n in config.n_values:
            p = make_uniform(n) if config.distribution == DistributionKind.UNIFORM else make_zipf(n, config.s)
            for eps in config.eps_values:
                jobs.append((p, eps))

        def point(p: Distribution, eps: float) -> Tuple[List[Dict[str, Any]], float]:
            plan = tsallis_plan_for(p, config.q, eps, config)
            exact = exact_tsallis(p, config.q)
            rows = []
            for t in range(config.trials):
                trial_seed = config.seed + t
                rng = seed_stream(trial_seed, p.n, int(round(eps * 1e9)))
                value, report = estimate_once(p, functional, eps, plan, rng, config)
                error = abs(value - exact)
                rows.append({
                    "q": config.q, "n": p.n, "eps": eps, "seed": trial_seed,
                    "queries_total": report.queries_total, "abs_error": error, "success": error <= eps,
                })
            return rows, predicted_query_bound(plan, p)

        results = await self.gather_ordered(point, jobs)
        rows = [row for point_rows, _ in results for row in point_rows]
        frame = pd.DataFrame(rows, columns=SWEEP_COLUMNS).sort_values(["q", "n", "eps", "seed"]).reset_index(drop=True)
        predicted = [
            {"n": p.n, "eps": eps, "bound": bound} for (p, eps), (_, bound) in zip(jobs, results)
        ]
        fit = fit_sweep(frame, config.q)
        fit["predicted_query_bound"] = predicted
        fit["config"] = config.model_dump(mode="json")
        return frame, fit

    async def run_verify(self, config: VerifyConfig) -> Dict[str, Any]:
        """Planner conformance, deterministic budgets under every profile, beta inequalities, backends."""
        cases = verify_cases(config)
        results = await self.gather_ordered(verify_case, [(case, config) for case in cases])
        comparison = None
        if config.compare_count:
            compare_config = CompareConfig(
                count=config.compare_count, discriminator=config.discriminator,
                polynomials=config.polynomials, seed=config.seed,
            )
            comparison = await self.run_compare(compare_config)
        passed = all(r["passed"] for r in results) and (comparison is None or comparison["passed"])
        failures = [r["case"] for r in results if not r["passed"]]
        logger.info(f"verify: {len(results) - len(failures)}/{len(results)} plan cases passed")
        return {
            "passed": passed,
            "failed_cases": failures,
            "cases": results,
            "compare_backends": comparison,
            "config": config.model_dump(mode="json"),
        }

    async def run_compare(self, config: CompareConfig) -> Dict[str, Any]:
        jobs = [(index, config) for index in range(config.count)]
        results = await self.gather_ordered(compare_case, jobs)
        worst = max(r["max_gap"] for r in results)
        return {
            "passed": worst <= config.tolerance,
            "max_gap": worst,
            "tolerance": config.tolerance,
            "cases": results,
            "config": config.model_dump(mode="json"),
        }


def fit_sweep(frame: pd.DataFrame, q: float) -> Dict[str, Any]:
    """Slope of log(mean queries) against log(1/eps) per n and against log(n) per eps."""
    means = frame.groupby(["n", "eps"], as_index=False)["queries_total"].mean()
    eps_fits, n_fits = [], []
    for n, group in means.groupby("n"):
        if len(group) >= 2:
            fit = fit_loglog_slope(1.0 / group["eps"].to_numpy(), group["queries_total"].to_numpy())
            eps_fits.append({"n": int(n), **fit})
    for eps, group in means.groupby("eps"):
        if len(group) >= 2:
            fit = fit_loglog_slope(group["n"].to_numpy(), group["queries_total"].to_numpy())
            n_fits.append({"eps": float(eps), **fit})
    return {
        "q": q,
        "predicted_exponents": predicted_exponents(q),
        "eps_fits": eps_fits,
        "n_fits": n_fits,
        "success_fraction": float(frame["success"].mean()),
    }


def verify_cases(config: VerifyConfig) -> List[Dict[str, Any]]:
    """(functional, q, eps, n) combinations; q > 1 plans do not depend on n and are checked at each n."""
    cases = []
    for q in config.q_values:
        for eps in config.eps_values:
            for n in config.n_values:
                cases.append({"functional": "tsallis", "q": q, "eps": eps, "n": n})
    if config.include_shannon:
        for eps in config.eps_values:
            for n in config.n_values:
                cases.append({"functional": "shannon", "q": None, "eps": eps, "n": n})
    return cases


def _profiles(config: VerifyConfig) -> List[Tuple[str, Any]]:
    settings = []
    for profile in config.profiles:
        if profile == Profile.ADVERSARIAL:
            for seed in range(config.adversarial_seeds):
                settings.append((f"adversarial:{seed}", config.discriminator.model_copy(update={"profile": profile, "seed": seed})))
        else:
            settings.append((profile.value, config.discriminator.model_copy(update={"profile": profile})))
    return settings


def verify_case(case: Dict[str, Any], config: VerifyConfig) -> Dict[str, Any]:
    """Plan one case and run every check on uniform and Zipf distributions of its n."""
    n, eps = case["n"], case["eps"]
    if case["functional"] == "shannon":
        plan = plan_shannon(n, eps, config)
    else:
        plan = plan_tsallis(case["q"], n, eps, config)
    if config.sabotage_bounds is not None:
        plan = scale_bounds(plan, config.sabotage_bounds)

    distributions = {"uniform": make_uniform(n), "zipf": make_zipf(n, 1.0)}
    if case["functional"] == "shannon":
        # Shannon tails are checked on the distributions the case estimates
        conditions = verify_plan_conditions(plan, distributions["uniform"])
        zipf_tail = check_tail(plan, distributions["zipf"])
        conditions = replace(conditions, conditions=conditions.conditions + (replace(zipf_tail, name="tail_zipf"),))
    else:
        conditions = verify_plan_conditions(plan)
    approximation = conditions.condition("local_approximation")
    budgets = []
    for dist_name, p in distributions.items():
        for profile_name, settings in _profiles(config):
            report = verify_error_budget(p, plan, settings, approximation=approximation)
            budgets.append({
                "distribution": dist_name,
                "profile": profile_name,
                "passed": report.passed,
                "error": report.error,
                "limit": report.limit,
                "localization_margin": report.localization_margin,
                "completeness_margin": report.completeness_margin,
            })
    passed = conditions.passed and all(b["passed"] for b in budgets)
    if not passed:
        logger.warning(f"verify case {case} failed")
    return {
        "case": case,
        "m": plan.m,
        "passed": passed,
        "conditions": conditions.to_dict(),
        "budgets": budgets,
        "worst_budget_ratio": max(b["error"] / b["limit"] for b in budgets),
    }


def compare_case(index: int, config: CompareConfig) -> Dict[str, Any]:
    """Per-level amplitudes of the closed form, the branch pipeline and the dense backend."""
    rng = seed_stream(config.seed, COMPARE_STREAM, index)
    n = int(rng.integers(2, config.max_n + 1))
    p = make_random(n, rng)
    plan = plan_tsallis(config.q, n, config.eps, config)
    closed = level_amplitudes(p, plan, config.discriminator)
    pipeline = np.array([pipeline_level_amplitude(p, plan, j, config.discriminator)[0] for j in range(1, plan.m + 1)])
    gaps = {"pipeline": float(np.max(np.abs(pipeline - closed)))}
    for purification in Purification:
        system = build_dense_system(p, purification, config.seed + index)
        dense = np.array([
            dense_level_amplitude(p, plan, j, config.discriminator, system) for j in range(1, plan.m + 1)
        ])
        gaps[purification.value] = float(np.max(np.abs(dense - closed)))
    max_gap = max(gaps.values())
    return {"index": index, "n": n, "probs": p.probs.tolist(), "m": plan.m, "gaps": gaps, "max_gap": max_gap}


def certify_polynomial(config: CertifyConfig) -> Dict[str, Any]:
    """Build and certify one polynomial; ConstructionFailedError propagates."""
    if config.kind == PolyKind.NEG_POWER:
        poly = build_neg_power(config.c, config.delta, config.eps, config.polynomials)
    elif config.kind == PolyKind.POS_POWER:
        poly = build_pos_power(config.c, config.nu, config.beta, config.eps, config.polynomials)
    else:
        poly = build_sqrt_log(config.j, config.eps, config.m, config.polynomials)
    return {
        "passed": poly.cert.passed,
        "poly": poly.to_dict(),
        "config": config.model_dump(mode="json"),
    }
