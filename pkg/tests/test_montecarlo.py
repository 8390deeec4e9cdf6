"""
Tests for the Monte Carlo harness.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from lunakit.core import ValidationError, spherical_coordinates
from lunakit.ephemeris import EphemerisMethod
from lunakit.lunar_constants import EphemerisVariant, SolverStep
from lunakit.measurement import ErrorBudgetConfig
from lunakit.montecarlo import (
    Scenario, TrialResult, draw_receiver, error_budget_attribution, pass_sweep,
    percentile_nearest_rank, run_trial, run_trials, summarize, time_to_accuracy,
)
from lunakit.performance import perf_monitor
from lunakit.solver import SolverEstimate, StepRecord


def _result(index, error_m, flags=(), mirror_correct=True):
    steps = [StepRecord(SolverStep.ALGEBRAIC, [0.0, 0.0, 1737.4], 1.0),
             StepRecord(SolverStep.CONSTRAINED, [0.0, 0.0, 1737.4], 1.0, 5),
             StepRecord(SolverStep.UNCONSTRAINED, [0.0, 0.0, 1737.4], 1.0, 3)]
    estimate = SolverEstimate([0.0, 0.0, 1737.4], steps, list(flags))
    return TrialResult(index, [0.0, 0.0, 1737.4], estimate, error_m,
                       {'step1': 50e3, 'step2': 10e3, 'step3': error_m}, mirror_correct, 700)


class TestPercentile:
    """Test the nearest-rank percentile."""

    def test_one_to_hundred(self):
        """The 99th percentile of 1..100 is 100."""
        assert percentile_nearest_rank(np.arange(1, 101), 99.0) == 100.0

    def test_median_rank(self):
        """The 50th percentile of 1..10 is the sixth value."""
        assert percentile_nearest_rank(np.arange(1, 11), 50.0) == 6.0

    def test_constant(self):
        """Every percentile of a constant sample is that constant."""
        assert percentile_nearest_rank([4.2] * 7, 99.0) == 4.2

    def test_empty(self):
        """An empty sample has no percentile."""
        with pytest.raises(ValidationError):
            percentile_nearest_rank([], 99.0)


class TestSummary:
    """Test aggregation of trial results."""

    def test_statistics(self):
        """Mean, 99% and failures are reported over the trials."""
        results = [_result(i, float(i + 1)) for i in range(100)]
        results.append(TrialResult(100, [0.0, 0.0, 1737.4], message='no pass'))
        summary = summarize(results)
        assert summary['n_trials'] == 101
        assert summary['failures'] == 1
        assert summary['mean_error_m'] == pytest.approx(50.5)
        assert summary['p99_error_m'] == 100.0
        assert summary['mean_iterations']['total'] == 8.0
        assert summary['step_mean_error_km']['step1'] == pytest.approx(50.0)

    def test_iteration_cap_fraction(self):
        """The share of solves hitting the cap is reported per step."""
        results = [_result(0, 1.0, ['step3_iteration_cap']), _result(1, 1.0)]
        summary = summarize(results)
        assert summary['iteration_cap_fraction']['step3'] == 0.5
        assert summary['iteration_cap_fraction']['step2'] == 0.0

    def test_all_failed(self):
        """Only counts are reported when every trial failed."""
        summary = summarize([TrialResult(0, [0.0, 0.0, 1737.4], message='boom')])
        assert summary['failures'] == 1
        assert 'mean_error_m' not in summary

    def test_empty(self):
        """Summarising nothing is an error."""
        with pytest.raises(ValidationError):
            summarize([])

    def test_time_to_accuracy(self):
        """Hours until the mean error first reaches 10 m."""
        sweep = [{'n_passes': 1, 'mean_error_m': 80.0}, {'n_passes': 10, 'mean_error_m': 2.0},
                 {'n_passes': 2, 'mean_error_m': 12.0}]
        assert time_to_accuracy(sweep, 7200.0) == pytest.approx(20.0)
        assert time_to_accuracy(sweep[:1], 7200.0) is None


class TestScenario:
    """Test scenario validation and receiver draws."""

    def test_invalid(self):
        """Bad scenario values are rejected."""
        with pytest.raises(ValidationError):
            Scenario(n_trials=0)
        with pytest.raises(ValidationError):
            Scenario(mask_deg=95.0)
        with pytest.raises(ValidationError):
            Scenario(lat_range=(80.0, 70.0))

    def test_receiver_draw_within_bounds(self):
        """Drawn receivers stay inside the configured ranges."""
        scenario = Scenario()
        rng = np.random.default_rng(0)
        for _ in range(50):
            lat, lon, alt = spherical_coordinates(draw_receiver(scenario, rng))
            assert 70.0 - 1e-9 <= lat <= 90.0
            assert -10.0 - 1e-9 <= alt <= 10.0 + 1e-9

    def test_attribution_requires_method2(self):
        """Attribution is only defined for ephemeris method 2."""
        with pytest.raises(ValidationError):
            error_budget_attribution(Scenario(n_trials=1))


class TestTrials:
    """Test simulate-and-solve trials."""

    def test_trial_is_reproducible(self, noiseless_scenario):
        """A trial depends only on the scenario seed and its index."""
        first = run_trial(noiseless_scenario, 1)
        second = run_trial(noiseless_scenario, 1)
        assert np.array_equal(first.true_position, second.true_position)
        assert first.error_m == second.error_m

    def test_trials_are_independent(self, noiseless_scenario):
        """Different trial indices draw different receivers."""
        results = run_trials(noiseless_scenario, indices=[0, 1])
        assert not np.array_equal(results[0].true_position, results[1].true_position)
        assert [r.index for r in results] == [0, 1]

    def test_noiseless_closed_loop(self, noiseless_scenario):
        """Noiseless single-pass trials recover the receiver to under a metre."""
        results = run_trials(noiseless_scenario)
        assert all(r.succeeded for r in results)
        assert max(r.error_m for r in results) < 1.0
        assert perf_monitor.get_stats()['trial']['total_calls'] == 3

    def test_off_sphere_receivers(self, noiseless_scenario):
        """Receivers above the mean radius are recovered by the free refinement."""
        scenario = replace(noiseless_scenario, alt_range=(8.0, 8.0))
        results = run_trials(scenario)
        assert all(r.succeeded for r in results)
        assert max(r.error_m for r in results) < 1.0
        assert spherical_coordinates(results[0].true_position)[2] == pytest.approx(8.0)

    def test_row_layout(self, noiseless_scenario):
        """Trial rows carry the receiver and the solver history."""
        row = run_trial(noiseless_scenario, 0).to_row()
        assert row['trial'] == 0
        assert row['converged'] in (True, False)
        assert row['step2_iterations'] >= 1
        assert math.isfinite(row['step1_error_m'])

    @pytest.mark.slow
    def test_noiseless_hundred_trials(self):
        """All of 100 noiseless trials end under a metre."""
        scenario = Scenario(
            n_trials=100, ephemeris_method=EphemerisMethod(EphemerisVariant.PERFECT),
            errors=ErrorBudgetConfig.noiseless(),
        )
        results = run_trials(scenario, workers=4)
        assert all(r.succeeded and r.error_m < 1.0 for r in results)

    @pytest.mark.slow
    def test_workers_do_not_change_results(self):
        """Parallel and serial runs give identical trials."""
        scenario = Scenario(n_trials=4, seed=17)
        serial = run_trials(scenario, workers=1)
        parallel = run_trials(scenario, workers=2)
        assert [r.error_m for r in serial] == [r.error_m for r in parallel]

    @pytest.mark.slow
    def test_step_error_cascade(self):
        """Per-step mean errors fall from step 1 to step 3 with ephemeris method 1."""
        summary = summarize(run_trials(Scenario(n_trials=100, seed=1), workers=4))
        steps = summary['step_mean_error_km']
        assert steps['step1'] > steps['step2'] > steps['step3']
        assert 30.0 <= steps['step1'] <= 150.0
        assert 3.0 <= steps['step2'] <= 30.0
        assert 0.02 <= steps['step3'] <= 0.5

    @pytest.mark.slow
    def test_single_pass_mirror_rate(self):
        """Cost comparison picks the true side in roughly half of single passes."""
        summary = summarize(run_trials(Scenario(n_trials=100, seed=2), workers=4))
        assert 0.4 <= summary['mirror_identification_rate'] <= 0.7

    @pytest.mark.slow
    def test_multipass_mirror_always_resolved(self):
        """Two passes always select the true side."""
        scenario = Scenario(n_trials=50, seed=3, n_passes=2,
                            ephemeris_method=EphemerisMethod(EphemerisVariant.METHOD2))
        summary = summarize(run_trials(scenario, workers=4))
        assert summary['mirror_identification_rate'] == 1.0

    @pytest.mark.slow
    def test_more_passes_help(self):
        """Mean and 99% errors do not grow from 1 to 2 to 10 passes."""
        scenario = Scenario(n_trials=100, seed=4,
                            ephemeris_method=EphemerisMethod(EphemerisVariant.METHOD2))
        sweep = pass_sweep(scenario, (1, 2, 10), workers=4)
        means = [entry['mean_error_m'] for entry in sweep]
        p99s = [entry['p99_error_m'] for entry in sweep]
        assert means[0] >= means[1] >= means[2]
        assert p99s[0] >= p99s[1] >= p99s[2]
        assert means[1] <= 30.0
        assert means[2] <= 6.0

    @pytest.mark.slow
    def test_error_budget_ordering(self):
        """Ephemeris error dominates, then receiver clock, tracking and satellite clock."""
        scenario = Scenario(n_trials=50, seed=5, n_passes=10,
                            ephemeris_method=EphemerisMethod(EphemerisVariant.METHOD2))
        attribution = error_budget_attribution(scenario, workers=4)
        errors = attribution['mean_error_m']
        assert (errors['ephemeris'] > errors['receiver_clock']
                > errors['carrier_tracking'] > errors['satellite_clock'])
        assert attribution['share_percent']['ephemeris'] >= 60.0
