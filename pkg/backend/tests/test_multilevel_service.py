"""
Unit tests for the multi-level estimation engine
"""

import numpy as np
import pytest

from src.config import Backend, DiscriminatorSettings, Profile, Purification
from src.exceptions import InvalidArgumentError
from src.services.distribution_service import Distribution, exact_power_sum, make_uniform, make_zipf
from src.services.entropy_service import plan_tsallis_gt1, plan_tsallis_lt1
from src.services.multilevel_service import (
    beta_weights,
    build_level_plan,
    check_bounds,
    check_cap,
    check_local_approximation,
    check_tail,
    dense_level_amplitude,
    discriminator_precisions,
    level_amplitudes,
    level_costs,
    level_true_amplitude,
    pipeline_level_amplitude,
    predicted_query_bound,
    run_estimate,
    scale_bounds,
    tail_mass,
    truncate_levels,
    verify_error_budget,
    with_polys,
    worst_tail_mass,
)
from src.services.polynomial_service import constant_poly, from_coefficients


@pytest.fixture(scope="module")
def gt1_plan():
    """q = 2 power-sum plan at eps = 0.2 (three levels)."""
    return plan_tsallis_gt1(2.0, 0.2)


@pytest.fixture(scope="module")
def lt1_plan():
    """q = 1/2 plan for n = 16 at eps = 0.1 (twelve levels)."""
    return plan_tsallis_lt1(0.5, 16, 0.1)


class TestLevelPlan:
    """Plan assembly and validation"""

    def test_constant_plan_layout(self, constant_plan):
        plan = constant_plan([1.0, 1.0])
        assert plan.m == 2
        assert plan.phis == (1.0, 0.5, 0.25, 0.125)
        assert plan.bounds == (0.0, 1.0, 1.0, 1.0, 0.0)
        assert plan.discriminator(1).gamma == pytest.approx(0.25)
        assert plan.discriminator(2).gamma == pytest.approx(0.125)

    def test_mixed_parity_is_rejected(self, unit_functional):
        with pytest.raises(InvalidArgumentError):
            build_level_plan(unit_functional, [constant_poly(1.0), from_coefficients([0.0, 1.0])], 0.1, bounds=[0, 1, 1, 1, 0])

    def test_level_range(self, constant_plan):
        with pytest.raises(InvalidArgumentError):
            constant_plan([1.0]).poly(2)

    def test_precisions(self):
        eps1s, eps2s = discriminator_precisions([0.0, 2.0, 1.0, 0.0], 1, 0.48)
        assert eps1s == (pytest.approx(0.01),)
        assert eps2s == (pytest.approx(0.04),)

    def test_ae_precision(self, constant_plan):
        plan = constant_plan([1.0], eps=0.3)
        assert plan.ae_precision(1) == pytest.approx(0.05)

    def test_serialization_without_coefficients(self, gt1_plan):
        data = gt1_plan.to_dict(include_coefficients=False)
        assert data["m"] == 3
        assert all("coeffs" not in poly for poly in data["polys"])
        assert data["params"]["planner"] == "tsallis_gt1"


class TestLevelAmplitudes:
    """Closed form, branch pipeline and dense backend"""

    def test_two_point_ideal(self, two_point, constant_plan, ideal):
        plan = constant_plan([1.0, 1.0])
        assert level_true_amplitude(two_point, plan, 1, ideal) == pytest.approx(1.0)
        assert level_true_amplitude(two_point, plan, 2, ideal) == pytest.approx(0.0, abs=1e-12)

    def test_zero_polynomial_gives_zero(self, uniform4, constant_plan):
        assert np.allclose(level_amplitudes(uniform4, constant_plan([0.0, 0.0])), 0.0)

    def test_closed_form_matches_level_function(self, zipf16, gt1_plan):
        amplitudes = level_amplitudes(zipf16, gt1_plan)
        for j in range(1, gt1_plan.m + 1):
            assert amplitudes[j - 1] == pytest.approx(level_true_amplitude(zipf16, gt1_plan, j), abs=1e-12)

    @pytest.mark.parametrize("profile", [Profile.IDEAL, Profile.SMOOTH, Profile.ADVERSARIAL])
    def test_pipeline_matches_closed_form(self, zipf16, gt1_plan, profile):
        settings = DiscriminatorSettings(profile=profile, seed=3)
        closed = level_amplitudes(zipf16, gt1_plan, settings)
        for j in range(1, gt1_plan.m + 1):
            amplitude, _, queries = pipeline_level_amplitude(zipf16, gt1_plan, j, settings)
            assert amplitude == pytest.approx(closed[j - 1], abs=1e-12)
            assert queries == sum(level_costs(gt1_plan, settings)[j - 1].values())

    def test_dense_matches_closed_form(self, gt1_plan):
        p = Distribution([0.5, 0.3, 0.15, 0.05])
        closed = level_amplitudes(p, gt1_plan)
        for j in range(1, gt1_plan.m + 1):
            assert dense_level_amplitude(p, gt1_plan, j) == pytest.approx(closed[j - 1], abs=1e-9)

    @pytest.mark.parametrize("purification", [Purification.FIXED, Purification.RANDOM])
    def test_dense_constant_plan_keeps_all_mass(self, constant_plan, ideal, purification):
        p = Distribution([0.5, 0.3, 0.15, 0.05])
        plan = constant_plan([1.0, 1.0])
        closed = level_amplitudes(p, plan, ideal)
        for j in (1, 2):
            dense = dense_level_amplitude(p, plan, j, ideal, purification=purification, seed=5)
            assert dense == pytest.approx(closed[j - 1], abs=1e-9)
        assert dense_level_amplitude(p, plan, 1, ideal, purification=purification, seed=5) > p.probs[0]

    def test_beta_completeness_ideal(self, two_point, constant_plan, ideal):
        betas = beta_weights(two_point, constant_plan([1.0, 1.0]), ideal)
        assert betas.weight(0, 1) + betas.weight(0, 2) == pytest.approx(1.0)
        assert betas.weight(1, 0) == 0.0


class TestRunEstimate:
    def test_point_mass(self, point_mass, constant_plan, rng):
        plan = constant_plan([1.0])
        report = run_estimate(point_mass, plan, rng)
        assert report.estimate == pytest.approx(1.0, abs=plan.ae_precision(1))
        assert report.per_level[0]["true_amplitude"] == pytest.approx(1.0)
        assert report.per_level[0]["returned_zero"] is False

    def test_ledger_recomputes(self, uniform4, gt1_plan, rng):
        report = run_estimate(uniform4, gt1_plan, rng)
        total = 0
        for entry, cost in zip(report.ledger.levels, level_costs(gt1_plan)):
            calls = sum(r.repeats * (2 * r.grover_calls + 1) for r in entry.ae_rounds)
            total += calls * sum(cost.values())
        assert report.queries_total == total
        assert report.to_dict()["queries_total"] == total
        assert len(report.v_tildes) == gt1_plan.m

    def test_estimate_is_weighted_sum(self, uniform4, gt1_plan, rng):
        report = run_estimate(uniform4, gt1_plan, rng)
        expected = sum(gt1_plan.level_bound(j) * v for j, v in enumerate(report.v_tildes, start=1))
        assert report.estimate == pytest.approx(expected)

    def test_seeded_runs_repeat(self, uniform4, gt1_plan):
        first = run_estimate(uniform4, gt1_plan, np.random.default_rng(9))
        second = run_estimate(uniform4, gt1_plan, np.random.default_rng(9))
        assert first.estimate == second.estimate
        assert first.queries_total == second.queries_total

    def test_dense_backend_amplitudes(self, uniform4, gt1_plan, rng):
        block = run_estimate(uniform4, gt1_plan, rng)
        dense = run_estimate(uniform4, gt1_plan, np.random.default_rng(1), backend=Backend.DENSE)
        for b, d in zip(block.per_level, dense.per_level):
            assert d["true_amplitude"] == pytest.approx(b["true_amplitude"], abs=1e-9)

    def test_diagnostics(self, uniform4, gt1_plan, rng):
        report = run_estimate(uniform4, gt1_plan, rng, diagnostics=True)
        assert len(report.diagnostics["leakage_by_level"]) == gt1_plan.m
        assert np.array(report.diagnostics["beta_weights"]).shape == (4, gt1_plan.m)


class TestConditions:
    """Grid checks and negative controls"""

    def test_constant_plan_caps(self, constant_plan):
        assert check_cap(constant_plan([1.0, 0.5])).passed

    def test_power_plan_passes(self, gt1_plan):
        assert check_bounds(gt1_plan).passed
        assert check_local_approximation(gt1_plan).passed

    def test_scaled_bounds_fail(self, gt1_plan):
        result = check_local_approximation(scale_bounds(gt1_plan, 0.5))
        assert result.passed is False
        assert result.margin < 0

    def test_wrong_polynomials_fail(self, gt1_plan):
        junk = with_polys(gt1_plan, [constant_poly(0.5)] * gt1_plan.m)
        assert check_local_approximation(junk).passed is False

    def test_worst_case_tail(self, lt1_plan):
        assert lt1_plan.m == 12
        assert worst_tail_mass(lt1_plan, 16) == pytest.approx(16 * 2.0 ** -12)
        assert check_tail(lt1_plan).passed

    def test_truncated_plan_fails_tail(self, lt1_plan):
        result = check_tail(truncate_levels(lt1_plan, 2))
        assert result.passed is False
        assert result.detail["tail"] == pytest.approx(16 * 2.0 ** -10)

    def test_tail_of_distribution(self, lt1_plan):
        assert tail_mass(lt1_plan, make_uniform(4)) == 0.0
        assert check_tail(lt1_plan, make_uniform(4)).detail["source"] == "distribution"

    def test_truncation_bounds(self, lt1_plan):
        with pytest.raises(InvalidArgumentError):
            truncate_levels(lt1_plan, lt1_plan.m)


class TestErrorBudget:
    @pytest.mark.parametrize("profile", [Profile.IDEAL, Profile.SMOOTH])
    def test_power_sum_budget(self, gt1_plan, profile):
        p = make_zipf(16, 1.0)
        report = verify_error_budget(p, gt1_plan, DiscriminatorSettings(profile=profile))
        assert report.exact == pytest.approx(exact_power_sum(p, 2.0))
        assert report.error <= report.limit
        assert report.passed

    @pytest.mark.parametrize("plan_name", ["gt1_plan", "lt1_plan"])
    def test_budget_under_adversarial_seeds(self, request, plan_name):
        plan = request.getfixturevalue(plan_name)
        approximation = check_local_approximation(plan)
        p = make_zipf(16, 1.0)
        for seed in range(20):
            settings = DiscriminatorSettings(profile=Profile.ADVERSARIAL, seed=seed)
            report = verify_error_budget(p, plan, settings, approximation=approximation)
            assert report.passed, (seed, report.to_dict())

    def test_sabotaged_budget_fails(self, gt1_plan):
        report = verify_error_budget(make_uniform(4), scale_bounds(gt1_plan, 0.5))
        assert report.passed is False
        assert report.to_dict()["approximation"]["passed"] is False


def test_predicted_query_bound_grows_with_precision(uniform4):
    loose = plan_tsallis_gt1(2.0, 0.4)
    tight = plan_tsallis_gt1(2.0, 0.2)
    assert 0 < predicted_query_bound(loose, uniform4) < predicted_query_bound(tight, uniform4)
