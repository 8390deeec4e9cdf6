"""
Pytest configuration and shared fixtures for LunaKit tests.
"""

import numpy as np
import pytest

from lunakit.core import DEFAULT_CONSTANTS, surface_point
from lunakit.ephemeris import EphemerisMethod
from lunakit.lunar_constants import EphemerisVariant
from lunakit.measurement import ErrorBudgetConfig
from lunakit.montecarlo import SPAN_MARGIN, Scenario, simulate_receiver
from lunakit.orbit import Orbit
from lunakit.performance import perf_monitor


@pytest.fixture
def constants():
    """Provide the reference lunar constants."""
    return DEFAULT_CONSTANTS


@pytest.fixture
def orbit():
    """Provide the reference frozen orbit."""
    return Orbit()


@pytest.fixture
def receiver():
    """Provide a receiver at 85 N, 30 E on the mean surface, off the ground track."""
    return surface_point(85.0, 30.0, 0.0)


@pytest.fixture
def noiseless_scenario():
    """Provide a scenario with perfect ephemeris and every error source off."""
    return Scenario(
        n_trials=3,
        ephemeris_method=EphemerisMethod(EphemerisVariant.PERFECT),
        errors=ErrorBudgetConfig.noiseless(),
        lat_range=(80.0, 90.0),
        random_anomaly=False,
    )


def _simulate(scenario, receiver, n_passes, seed=0):
    orbit = scenario.orbit()
    truth = orbit.sample(0.0, (n_passes + 1) * orbit.period + SPAN_MARGIN, scenario.sample_step)
    noise_seed, ephemeris_seed = np.random.SeedSequence(seed).spawn(2)
    return simulate_receiver(scenario, receiver, orbit, truth, np.random.default_rng(noise_seed),
                             np.random.default_rng(ephemeris_seed), n_passes)


@pytest.fixture
def noiseless_pass(noiseless_scenario, receiver):
    """Provide one simulated pass with perfect ephemeris and no measurement error."""
    return _simulate(noiseless_scenario, receiver, 1)


@pytest.fixture
def noiseless_two_passes(noiseless_scenario, receiver):
    """Provide two simulated passes with perfect ephemeris and no measurement error."""
    return _simulate(noiseless_scenario, receiver, 2)


@pytest.fixture(autouse=True)
def reset_perf_monitor():
    """Start every test with an empty performance monitor."""
    perf_monitor.reset()
    yield
    perf_monitor.reset()


@pytest.fixture
def out_dir(tmp_path):
    """Provide a temporary output directory."""
    path = tmp_path / "out"
    path.mkdir()
    return path


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line(
        "markers", "slow: mark test as slow running (Monte Carlo scale)"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as integration test"
    )
