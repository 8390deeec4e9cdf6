"""
Monte Carlo evaluation of the positioning pipeline

Each trial draws a receiver near the North Pole, simulates the satellite
passes it sees, builds the broadcast ephemeris and solves. Trials are
seeded from (scenario seed, trial index) so any trial reproduces on its own
and results never depend on the number of workers.
"""

import logging
import math
import time
from dataclasses import dataclass, field, replace
from multiprocessing import Pool
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    DEFAULT_CONSTANTS, GeometryError, LunaKitError, LunarConstants, ValidationError,
    spherical_coordinates, surface_point,
)
from .ephemeris import EphemerisMethod, EphemerisSet, build_broadcast_ephemeris
from .lunar_constants import (
    DEFAULT_ELEVATION_MASK, OBSERVATION_RATE, RECEIVER_DISTRIBUTION, ErrorSource,
    EphemerisVariant, SolverStep,
)
from .measurement import (
    ClockModel, ErrorBudgetConfig, LinkBudgetParams, ObservationSet, synthesize_pass,
)
from .orbit import KeplerianElements, Orbit, PassWindow, SatelliteStateSeries, first_complete_passes
from .performance import perf_monitor
from .solver import SolverConfig, SolverEstimate, locate, mirror_reflect, subtrack_plane_normal

logger = logging.getLogger(__name__)

TRIALS_SCHEMA = 'lunakit.trials/1'
SUMMARY_SCHEMA = 'lunakit.summary/1'

# Extra time after the last revolution so the final pass is never clipped
SPAN_MARGIN = 600.0  # s

ERROR_SOURCE_FIELDS = {
    ErrorSource.EPHEMERIS: 'ephemeris',
    ErrorSource.SATELLITE_CLOCK: 'satellite_clock',
    ErrorSource.RECEIVER_CLOCK: 'receiver_clock',
    ErrorSource.CARRIER_TRACKING: 'carrier_tracking',
}


@dataclass(frozen=True)
class Scenario:
    """Everything a batch of trials depends on"""

    seed: int = 0
    n_trials: int = 100
    ephemeris_method: EphemerisMethod = field(
        default_factory=lambda: EphemerisMethod(EphemerisVariant.METHOD1))
    n_passes: int = 1
    mask_deg: float = DEFAULT_ELEVATION_MASK
    errors: ErrorBudgetConfig = field(default_factory=ErrorBudgetConfig)
    lat_range: Tuple[float, float] = (RECEIVER_DISTRIBUTION['LAT_MIN'], RECEIVER_DISTRIBUTION['LAT_MAX'])
    lon_range: Tuple[float, float] = (RECEIVER_DISTRIBUTION['LON_MIN'], RECEIVER_DISTRIBUTION['LON_MAX'])
    alt_range: Tuple[float, float] = (RECEIVER_DISTRIBUTION['ALT_MIN'], RECEIVER_DISTRIBUTION['ALT_MAX'])
    elements: KeplerianElements = field(default_factory=KeplerianElements)
    frame_alignment_deg: float = 0.0
    random_anomaly: bool = True
    constants: LunarConstants = DEFAULT_CONSTANTS
    link: LinkBudgetParams = field(default_factory=LinkBudgetParams)
    clock: ClockModel = field(default_factory=ClockModel)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sample_step: float = 1.0 / OBSERVATION_RATE
    min_pass_samples: int = 120
    gdop_passes: int = 10

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValidationError(f"Need at least one trial, got {self.n_trials}")
        if self.n_passes < 1:
            raise ValidationError(f"Need at least one pass, got {self.n_passes}")
        if not 0.0 <= self.mask_deg < 90.0:
            raise ValidationError(f"Elevation mask must be in [0, 90) deg, got {self.mask_deg}")
        lat_low, lat_high = self.lat_range
        if not -90.0 <= lat_low <= lat_high <= 90.0:
            raise ValidationError(f"Bad receiver latitude range {self.lat_range}")
        if self.lon_range[0] > self.lon_range[1] or self.alt_range[0] > self.alt_range[1]:
            raise ValidationError("Receiver ranges must be ordered (low, high)")
        if self.sample_step <= 0:
            raise ValidationError("Sample step must be positive")
        if self.min_pass_samples < self.solver.step1_window:
            raise ValidationError("Passes must hold at least the step 1 window")

    def orbit(self) -> Orbit:
        return Orbit(self.elements, self.constants, math.radians(self.frame_alignment_deg))

    @property
    def sigma_vel(self) -> float:
        """Ephemeris velocity error the receiver assumes (km/s)"""
        return self.ephemeris_method.sigma_vel

    def with_errors(self, errors: ErrorBudgetConfig) -> 'Scenario':
        return replace(self, errors=errors)


class Simulation:
    """Inputs of one solve: truth, visible passes, observations and ephemeris"""

    def __init__(self, receiver: np.ndarray, truth: SatelliteStateSeries,
                 passes: List[PassWindow], observations: ObservationSet,
                 ephemeris: EphemerisSet):
        self.receiver = receiver
        self.truth = truth
        self.passes = passes
        self.observations = observations
        self.ephemeris = ephemeris


def simulate_receiver(scenario: Scenario, receiver: np.ndarray, provider,
                      truth: SatelliteStateSeries, noise_rng: np.random.Generator,
                      ephemeris_seed, n_passes: Optional[int] = None) -> Simulation:
    """Observe the first complete passes over a receiver and broadcast their ephemeris"""
    n_passes = n_passes if n_passes is not None else scenario.n_passes
    windows = [w for w in first_complete_passes(truth, receiver, scenario.mask_deg, len(truth))
               if len(w) >= scenario.min_pass_samples]
    if len(windows) < n_passes:
        raise GeometryError(f"Only {len(windows)} usable pass(es), {n_passes} requested")
    windows = windows[:n_passes]
    for pass_id, window in enumerate(windows):
        window.pass_id = pass_id

    sets = [
        synthesize_pass(receiver, truth.times[w.start_index:w.stop_index], provider, w.pass_id,
                        scenario.sigma_vel, scenario.errors, scenario.link, scenario.clock,
                        noise_rng, scenario.constants, scenario.mask_deg)
        for w in windows
    ]
    observations = sets[0] if len(sets) == 1 else ObservationSet.concatenate(sets)

    method = scenario.ephemeris_method
    if not scenario.errors.ephemeris:
        method = EphemerisMethod(EphemerisVariant.PERFECT)
    ephemeris = build_broadcast_ephemeris(truth, windows, method, ephemeris_seed)
    logger.debug(f"Simulated {len(observations)} observations over {len(windows)} pass(es)")
    return Simulation(receiver, truth, windows, observations, ephemeris)


class TrialResult:
    """Outcome of one Monte Carlo trial"""

    def __init__(self, index: int, true_position: np.ndarray,
                 estimate: Optional[SolverEstimate] = None,
                 error_m: float = math.nan,
                 step_errors_m: Optional[Dict[str, float]] = None,
                 mirror_correct: Optional[bool] = None,
                 n_observations: int = 0,
                 message: str = '',
                 duration_s: float = 0.0):
        self.index = index
        self.true_position = np.asarray(true_position, dtype=float)
        self.estimate = estimate
        self.error_m = error_m
        self.step_errors_m = step_errors_m or {}
        self.mirror_correct = mirror_correct
        self.n_observations = n_observations
        self.message = message
        self.duration_s = duration_s

    @property
    def succeeded(self) -> bool:
        return self.estimate is not None and math.isfinite(self.error_m)

    @property
    def iterations(self) -> Dict[str, int]:
        if self.estimate is None:
            return {'step2': 0, 'step3': 0}
        return self.estimate.iterations

    def to_row(self) -> Dict[str, Any]:
        """Flat record for the trials CSV"""
        lat, lon, alt = spherical_coordinates(self.true_position)
        iterations = self.iterations
        return {
            'trial': self.index,
            'lat_deg': lat,
            'lon_deg': lon,
            'alt_km': alt,
            'error_m': self.error_m,
            'step1_error_m': self.step_errors_m.get('step1', math.nan),
            'step2_error_m': self.step_errors_m.get('step2', math.nan),
            'step3_error_m': self.step_errors_m.get('step3', math.nan),
            'step2_iterations': iterations['step2'],
            'step3_iterations': iterations['step3'],
            'converged': bool(self.estimate is not None and self.estimate.converged),
            'mirror_correct': '' if self.mirror_correct is None else bool(self.mirror_correct),
            'n_observations': self.n_observations,
            'flags': ';'.join(self.estimate.flags) if self.estimate is not None else '',
            'message': self.message,
        }


def _trial_streams(seed: int, index: int) -> Tuple[np.random.Generator, ...]:
    children = np.random.SeedSequence([seed, index]).spawn(3)
    return tuple(np.random.default_rng(child) for child in children)


def draw_receiver(scenario: Scenario, rng: np.random.Generator) -> np.ndarray:
    lat = rng.uniform(*scenario.lat_range)
    lon = rng.uniform(*scenario.lon_range) % 360.0
    alt = rng.uniform(*scenario.alt_range)
    return surface_point(lat, lon, alt, scenario.constants)


def _side_agnostic_error(position: np.ndarray, truth: np.ndarray, normal: np.ndarray) -> float:
    direct = np.linalg.norm(position - truth)
    reflected = np.linalg.norm(mirror_reflect(position, normal) - truth)
    return float(min(direct, reflected) * 1e3)


def score_estimate(estimate: SolverEstimate, truth: np.ndarray,
                   satellites: np.ndarray, n_passes: int) -> Tuple[float, Dict[str, float], bool]:
    """Final error, per-step errors (m) and whether the selected side is the true one"""
    normal = subtrack_plane_normal(satellites)
    step_errors = {}
    for step in (SolverStep.ALGEBRAIC, SolverStep.CONSTRAINED):
        record = estimate.step(step)
        if record is not None:
            step_errors[f'step{int(step)}'] = _side_agnostic_error(record.position, truth, normal)

    direct = estimate.error_m(truth)
    mirror = (math.inf if estimate.mirror_position is None
              else float(np.linalg.norm(estimate.mirror_position - truth) * 1e3))
    mirror_correct = direct <= mirror
    error = direct if n_passes > 1 else min(direct, mirror)
    step_errors['step3'] = error
    return error, step_errors, mirror_correct


def run_trial(scenario: Scenario, index: int) -> TrialResult:
    """One complete simulate-and-solve trial, failures captured in the result"""
    started = time.perf_counter()
    receiver_rng, ephemeris_rng, noise_rng = _trial_streams(scenario.seed, index)
    receiver = draw_receiver(scenario, receiver_rng)
    orbit = scenario.orbit()
    if scenario.random_anomaly:
        orbit = orbit.with_anomaly_offset(receiver_rng.uniform(0.0, 360.0))

    try:
        span = (scenario.n_passes + 1) * orbit.period + SPAN_MARGIN
        truth = orbit.sample(0.0, span, scenario.sample_step)
        simulation = simulate_receiver(scenario, receiver, orbit, truth, noise_rng, ephemeris_rng)
        estimate = locate(simulation.observations, simulation.ephemeris, scenario.solver, scenario.constants)
        first = simulation.passes[0]
        satellites = truth.positions[first.start_index:first.stop_index]
        error, step_errors, mirror_correct = score_estimate(estimate, receiver, satellites, scenario.n_passes)
    except LunaKitError as exc:
        logger.error(f"Trial {index} failed: {exc}")
        return TrialResult(index, receiver, message=str(exc),
                           duration_s=time.perf_counter() - started)

    logger.debug(f"Trial {index}: error {error:.3f} m, iterations {estimate.iterations}")
    return TrialResult(index, receiver, estimate, error, step_errors, mirror_correct,
                       len(simulation.observations), duration_s=time.perf_counter() - started)


def _run_trial_args(args: Tuple[Scenario, int]) -> TrialResult:
    return run_trial(*args)


def run_trials(scenario: Scenario, workers: int = 1,
               indices: Optional[Iterable[int]] = None) -> List[TrialResult]:
    """All trials of a scenario, ordered by trial index"""
    indices = list(indices) if indices is not None else list(range(scenario.n_trials))
    logger.info(f"Running {len(indices)} trial(s), ephemeris {scenario.ephemeris_method.name}, "
                f"{scenario.n_passes} pass(es), {workers} worker(s)")
    jobs = [(scenario, index) for index in indices]
    if workers > 1:
        with Pool(workers) as pool:
            results = pool.map(_run_trial_args, jobs)
    else:
        results = []
        for count, job in enumerate(jobs, start=1):
            results.append(_run_trial_args(job))
            if count % 10 == 0 or count == len(jobs):
                logger.info(f"Completed {count}/{len(jobs)} trials")

    for result in results:
        perf_monitor.record('trial', result.duration_s, result.succeeded)
    return sorted(results, key=lambda r: r.index)


def percentile_nearest_rank(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the value at rank min(n, floor(q/100 * n) + 1)"""
    ordered = np.sort(np.asarray(values, dtype=float))
    if ordered.size == 0:
        raise ValidationError("Percentile of an empty sample")
    if not 0.0 <= q <= 100.0:
        raise ValidationError(f"Percentile must be in [0, 100], got {q}")
    rank = min(ordered.size, int(math.floor(q / 100.0 * ordered.size)) + 1)
    return float(ordered[rank - 1])


def summarize(results: List[TrialResult]) -> Dict[str, Any]:
    """Accuracy and convergence statistics over a set of trials"""
    if not results:
        raise ValidationError("No trial results to summarise")
    good = [r for r in results if r.succeeded]
    summary: Dict[str, Any] = {
        'schema': SUMMARY_SCHEMA,
        'n_trials': len(results),
        'failures': len(results) - len(good),
    }
    if not good:
        logger.warning("Every trial failed")
        return summary

    errors = np.array([r.error_m for r in good])
    step2 = np.array([r.iterations['step2'] for r in good])
    step3 = np.array([r.iterations['step3'] for r in good])
    mirror = [r.mirror_correct for r in good if r.mirror_correct is not None]

    summary.update({
        'mean_error_m': float(np.mean(errors)),
        'p99_error_m': percentile_nearest_rank(errors, 99.0),
        'max_error_m': float(np.max(errors)),
        'step_mean_error_km': {
            key: float(np.mean([r.step_errors_m[key] for r in good if key in r.step_errors_m])) * 1e-3
            for key in ('step1', 'step2', 'step3')
        },
        'mean_iterations': {
            'step2': float(np.mean(step2)),
            'step3': float(np.mean(step3)),
            'total': float(np.mean(step2 + step3)),
        },
        'iteration_cap_fraction': {
            step: float(np.mean([f'{step}_iteration_cap' in r.estimate.flags for r in good]))
            for step in ('step2', 'step3')
        },
        'mirror_identification_rate': float(np.mean(mirror)) if mirror else math.nan,
        'converged_fraction': float(np.mean([r.estimate.converged for r in good])),
    })
    return summary


def error_budget_attribution(scenario: Scenario, workers: int = 1) -> Dict[str, Any]:
    """Mean error with one error source at a time, plus all sources together"""
    if scenario.ephemeris_method.variant != EphemerisVariant.METHOD2:
        raise ValidationError("Error budget attribution is defined for ephemeris method 2")

    sources = {}
    for source, name in ERROR_SOURCE_FIELDS.items():
        logger.info(f"Attribution run: {name} only")
        summary = summarize(run_trials(scenario.with_errors(ErrorBudgetConfig.only(name)), workers))
        sources[name] = summary.get('mean_error_m', math.nan)

    total = summarize(run_trials(scenario.with_errors(ErrorBudgetConfig()), workers))
    combined = sum(value for value in sources.values() if math.isfinite(value))
    return {
        'schema': SUMMARY_SCHEMA,
        'n_passes': scenario.n_passes,
        'mean_error_m': sources,
        'total_mean_error_m': total.get('mean_error_m', math.nan),
        'share_percent': {
            name: 100.0 * value / combined if combined > 0 else math.nan
            for name, value in sources.items()
        },
    }


def pass_sweep(scenario: Scenario, passes: Sequence[int] = (1, 2, 10),
               workers: int = 1) -> List[Dict[str, Any]]:
    """Mean and 99th-percentile error as a function of the number of passes"""
    sweep = []
    for count in passes:
        summary = summarize(run_trials(replace(scenario, n_passes=count), workers))
        sweep.append({
            'n_passes': count,
            'mean_error_m': summary.get('mean_error_m', math.nan),
            'p99_error_m': summary.get('p99_error_m', math.nan),
            'failures': summary['failures'],
        })
        logger.info(f"{count} pass(es): mean {sweep[-1]['mean_error_m']:.2f} m, "
                    f"99% {sweep[-1]['p99_error_m']:.2f} m")
    return sweep


def time_to_accuracy(sweep: List[Dict[str, Any]], period_s: float,
                     threshold_m: float = 10.0) -> Optional[float]:
    """Hours of passes (one per revolution) until the mean error reaches the threshold"""
    for entry in sorted(sweep, key=lambda e: e['n_passes']):
        if entry['mean_error_m'] <= threshold_m:
            return entry['n_passes'] * period_s / 3600.0
    return None
