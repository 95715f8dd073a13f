"""
Unit tests for simulated amplitude estimation and the query ledger
"""

import math

import numpy as np
import pytest

from src.config import AESettings
from src.exceptions import InvalidArgumentError
from src.services.amplitude_estimation_service import (
    AEOutcome,
    ae_distribution,
    boost_repeats,
    error_radius,
    first_stage_calls,
    median_boosted_ae,
    round_queries,
    sample_estimates,
    second_stage_calls,
    two_stage_ae,
)
from src.services.ledger import QueryLedger


class TestOutcomeDistribution:
    """Exact phase-estimation statistics"""

    @pytest.mark.parametrize("a, t", [(0.0, 7), (0.2, 16), (0.5, 33), (0.93, 100), (1.0, 12)])
    def test_probabilities_sum_to_one(self, a, t):
        dist = ae_distribution(a, t)
        assert dist.probs.sum() == pytest.approx(1.0)
        assert np.all(dist.probs >= 0)

    @pytest.mark.parametrize("a, t", [(0.1, 10), (0.37, 25), (0.5, 64), (0.81, 200), (0.02, 400)])
    def test_error_radius_mass(self, a, t):
        dist = ae_distribution(a, t)
        assert dist.mass_within(a, error_radius(a, t)) >= 8.0 / math.pi ** 2

    def test_mass_bound_on_random_pairs(self):
        rng = np.random.default_rng(2024)
        for a, t in zip(rng.random(100), rng.integers(1, 1025, size=100)):
            dist = ae_distribution(float(a), int(t))
            assert dist.mass_within(float(a), error_radius(float(a), int(t))) >= 8.0 / math.pi ** 2 - 1e-12

    def test_exact_grid_points(self):
        assert ae_distribution(0.0, 9).mass_within(0.0, 0.0) == pytest.approx(1.0)
        assert ae_distribution(1.0, 10).mass_within(1.0, 1e-12) == pytest.approx(1.0)

    def test_rejects_bad_arguments(self):
        with pytest.raises(InvalidArgumentError):
            ae_distribution(1.5, 10)
        with pytest.raises(InvalidArgumentError):
            ae_distribution(0.5, 0)


class TestSampling:
    def test_small_grid_samples_are_grid_values(self, rng):
        samples = sample_estimates(0.3, 20, 200, rng)
        grid = np.sin(np.pi * np.arange(11) / 20) ** 2
        assert np.all(np.min(np.abs(samples[:, None] - grid[None, :]), axis=1) < 1e-12)

    def test_large_grid_uses_window(self, rng):
        settings = AESettings(max_grid=64, window=32)
        samples = sample_estimates(0.3, 5000, 400, rng, settings)
        within = np.abs(samples - 0.3) <= error_radius(0.3, 5000)
        assert within.mean() > 8.0 / math.pi ** 2 - 0.1

    def test_large_grid_tail_follows_kernel(self):
        a, t, size = 0.3, 1024, 200_000
        samples = sample_estimates(a, t, size, np.random.default_rng(8), AESettings(max_grid=64, window=16))
        exact_tail = 1.0 - ae_distribution(a, t).mass_within(a, 0.1)
        empirical_tail = float(np.mean(np.abs(samples - a) > 0.1))
        assert empirical_tail == pytest.approx(exact_tail, rel=0.15)

    def test_large_grid_samples_are_grid_values(self, rng):
        samples = sample_estimates(0.3, 1024, 5000, rng, AESettings(max_grid=64, window=16))
        grid = ae_distribution(0.3, 1024).estimates
        assert np.all(np.min(np.abs(samples[:, None] - grid[None, :]), axis=1) < 1e-12)

    def test_seeded(self):
        first = sample_estimates(0.4, 50, 10, np.random.default_rng(1))
        assert np.array_equal(first, sample_estimates(0.4, 50, 10, np.random.default_rng(1)))


class TestBoosting:
    def test_repeat_count(self):
        assert boost_repeats(0.1) == math.ceil(18.0 * math.log(20.0))
        assert boost_repeats(0.1, AESettings(boost_constant=1.0)) == math.ceil(math.log(20.0))

    def test_median_is_close(self, rng):
        outcome = median_boosted_ae(0.3, 200, 0.05, rng)
        assert abs(outcome.estimate - 0.3) <= error_radius(0.3, 200)
        assert outcome.grover_calls == 200

    def test_rejects_bad_eta(self, rng):
        with pytest.raises(InvalidArgumentError):
            median_boosted_ae(0.3, 10, 1.0, rng)


class TestTwoStage:
    """Two-stage protocol"""

    def test_zero_amplitude_returns_zero(self, rng):
        result = two_stage_ae(0.0, 0.05, 0.1, rng)
        assert result.returned_zero is True
        assert result.estimate == 0.0
        assert len(result.rounds) == 1

    def test_precision(self, rng):
        result = two_stage_ae(0.4, 0.01, 0.05, rng)
        assert result.returned_zero is False
        assert abs(result.estimate - 0.4) <= 0.01
        assert len(result.rounds) == 2

    @pytest.mark.parametrize("fraction", [0.0, 0.25, 0.5, 2.0])
    def test_accuracy_across_amplitudes(self, fraction):
        eps, eta = 0.1, 0.1
        a = fraction * eps
        rng = np.random.default_rng(31)
        results = [two_stage_ae(a, eps, eta, rng) for _ in range(100)]
        assert np.mean([abs(r.estimate - a) <= eps for r in results]) >= 1.0 - eta
        if fraction <= 0.5:
            assert np.mean([r.returned_zero for r in results]) >= 1.0 - eta

    @pytest.mark.parametrize("a", [0.1, 0.5, 0.9])
    def test_accuracy_and_second_stage_size(self, a):
        eps, eta = 0.05, 0.1
        rng = np.random.default_rng(17)
        results = [two_stage_ae(a, eps, eta, rng) for _ in range(100)]
        assert np.mean([abs(r.estimate - a) <= eps for r in results]) >= 1.0 - eta
        for result in results:
            if not result.returned_zero:
                assert result.rounds[1].grover_calls <= math.ceil(4.0 * math.pi * math.sqrt(2.0 * 1.5 * a) / eps) + 1

    def test_query_accounting(self, rng):
        result = two_stage_ae(0.4, 0.05, 0.1, rng, cost_per_call=7)
        expected = sum(r.repeats * (2 * r.grover_calls + 1) * 7 for r in result.rounds)
        assert result.queries == expected

    def test_call_counts(self):
        assert first_stage_calls(0.05) == math.ceil(math.pi * 40.0)
        assert second_stage_calls(0.0, 0.5) == math.ceil(2.0 * math.pi)
        assert second_stage_calls(0.5, 0.1) == math.ceil(40.0 * math.pi)

    def test_rejects_bad_eps(self, rng):
        with pytest.raises(InvalidArgumentError):
            two_stage_ae(0.2, 0.0, 0.1, rng)


class TestQueryLedger:
    def test_totals(self):
        ledger = QueryLedger()
        ledger.record_level(1, 1, 10, 12, 5, [AEOutcome(0.1, 3, 2)])
        ledger.record_level(2, 1, 12, 20, 9, [AEOutcome(0.0, 4, 1), AEOutcome(0.2, 8, 1)])
        assert ledger.levels[0].cost_per_call == 28
        assert ledger.by_level() == {1: 2 * 7 * 28, 2: (9 + 17) * 42}
        assert ledger.total == 2 * 7 * 28 + 26 * 42
        assert round_queries(AEOutcome(0.1, 3, 2), 28) == ledger.levels[0].queries

    def test_levels_must_increase(self):
        ledger = QueryLedger()
        ledger.record_level(2, 1, 1, 1, 1, [])
        with pytest.raises(ValueError):
            ledger.record_level(1, 1, 1, 1, 1, [])

    def test_merge(self):
        first, second = QueryLedger(), QueryLedger()
        first.record_level(1, 1, 2, 3, 4, [AEOutcome(0.1, 1, 1)])
        second.record_level(1, 1, 2, 3, 4, [AEOutcome(0.2, 2, 1)])
        merged = first.merge(second)
        assert merged.total == first.total + second.total
        assert merged.to_dict()["by_level"] == {"1": merged.total}
