"""
LunaKit - Lunar surface positioning from the Doppler shift of one orbiting satellite

A receiver near the lunar South or North Pole tracks the carrier of a single
satellite in an elliptical frozen orbit. From the Doppler measurements of one
or more passes and the broadcast ephemeris, LunaKit recovers the receiver
position with a three-step least-squares solver.

Key Features:
- Keplerian frozen-orbit propagation in a Moon-fixed frame
- Broadcast ephemeris with prediction-error models and Chebyshev fits
- Doppler simulation with light time, clock drift and link-budget noise
- Three-step solver with mirror-ambiguity resolution across passes
- GDOP maps and reproducible Monte Carlo campaigns

Basic Usage:
    import lunakit

    # Simulate one pass over a receiver at 85 N and solve
    simulation, estimate = lunakit.simulate_and_locate(85.0, 30.0, seed=1)
    print(estimate.error_m(simulation.receiver))

    # Monte Carlo over the default receiver distribution
    results = lunakit.run_trials(lunakit.Scenario(n_trials=20))
    print(lunakit.summarize(results)['mean_error_m'])
"""

from typing import Optional, Tuple

import numpy as np

# Core types and errors
from .core import (
    ConvergenceError, EphemerisWindowError, GeometryError, LunaKitError, LunarConstants,
    ValidationError, DEFAULT_CONSTANTS, surface_point, spherical_coordinates,
)

# Main modules
from .orbit import KeplerianElements, Orbit, PassWindow, SampledTrajectory, find_passes
from .ephemeris import ChebyshevEphemeris, EphemerisMethod, EphemerisSet, build_broadcast_ephemeris
from .measurement import (
    ClockModel, DopplerObservation, ErrorBudgetConfig, LinkBudgetParams, ObservationSet,
    synthesize_pass,
)
from .solver import SolverConfig, SolverEstimate, cost, locate
from .dop import GdopGrid, gdop, gdop_map
from .montecarlo import (
    SPAN_MARGIN, Scenario, Simulation, TrialResult, run_trials, simulate_receiver, summarize,
)
from .config import ScenarioConfig, load_config

# Constants and enums
from .lunar_constants import EphemerisVariant, ErrorSource, SolverStep

# Version info
__version__ = '0.2.0'
__author__ = 'LunaKit Contributors'
__license__ = 'MIT'


def simulate_and_locate(lat_deg: float, lon_deg: float, alt_km: float = 0.0,
                        scenario: Optional[Scenario] = None,
                        seed: int = 0) -> Tuple[Simulation, SolverEstimate]:
    """
    Quick helper: simulate the configured passes over one receiver and solve

    Args:
        lat_deg: Receiver latitude in degrees
        lon_deg: Receiver longitude in degrees
        alt_km: Receiver altitude above the mean radius in km
        scenario: Scenario to use (default: reference scenario)
        seed: Seed for the measurement noise and ephemeris errors

    Returns:
        (Simulation, SolverEstimate)

    Example:
        simulation, estimate = lunakit.simulate_and_locate(87.0, 120.0, seed=7)
    """
    scenario = scenario or Scenario(seed=seed)
    receiver = surface_point(lat_deg, lon_deg, alt_km, scenario.constants)
    orbit = scenario.orbit()
    truth = orbit.sample(0.0, (scenario.n_passes + 1) * orbit.period + SPAN_MARGIN, scenario.sample_step)

    noise_seed, ephemeris_seed = np.random.SeedSequence(seed).spawn(2)
    simulation = simulate_receiver(scenario, receiver, orbit, truth,
                                   np.random.default_rng(noise_seed), np.random.default_rng(ephemeris_seed))
    estimate = locate(simulation.observations, simulation.ephemeris, scenario.solver, scenario.constants)
    return simulation, estimate


# Module-level exports
__all__ = [
    # Core types
    'LunarConstants', 'DEFAULT_CONSTANTS', 'surface_point', 'spherical_coordinates',
    'LunaKitError', 'ValidationError', 'EphemerisWindowError', 'ConvergenceError', 'GeometryError',

    # Main modules
    'KeplerianElements', 'Orbit', 'PassWindow', 'SampledTrajectory', 'find_passes',
    'ChebyshevEphemeris', 'EphemerisMethod', 'EphemerisSet', 'build_broadcast_ephemeris',
    'ClockModel', 'DopplerObservation', 'ErrorBudgetConfig', 'LinkBudgetParams',
    'ObservationSet', 'synthesize_pass',
    'SolverConfig', 'SolverEstimate', 'cost', 'locate',
    'GdopGrid', 'gdop', 'gdop_map',
    'Scenario', 'Simulation', 'TrialResult', 'run_trials', 'simulate_receiver', 'summarize',
    'ScenarioConfig', 'load_config',

    # Constants
    'EphemerisVariant', 'ErrorSource', 'SolverStep',

    # Helper functions
    'simulate_and_locate',

    # Version info
    '__version__', '__author__', '__license__'
]
