"""
Tests for broadcast ephemeris generation and evaluation.
"""

import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy import signal

from lunakit.core import EphemerisWindowError, ValidationError
from lunakit.ephemeris import (
    ChebyshevEphemeris, ColoredNoiseFilter, EphemerisMethod, EphemerisSet,
    build_broadcast_ephemeris, colored_noise, corrupt_orbit, eval_ephemeris, fit_chebyshev,
    velocity_error_rms,
)
from lunakit.lunar_constants import EphemerisVariant
from lunakit.orbit import first_complete_passes


@pytest.fixture
def pass_segment(orbit, receiver):
    """Provide the truth samples of the first complete pass."""
    series = orbit.sample(0.0, 2 * orbit.period, 1.0)
    window = first_complete_passes(series, receiver, 5.0, 1)[0]
    return series.slice(window.start_index, window.stop_index)


class TestEphemerisMethod:
    """Test the ephemeris error model descriptors."""

    @pytest.mark.parametrize("name,variant", [
        ('1', EphemerisVariant.METHOD1),
        ('2', EphemerisVariant.METHOD2),
        ('perfect', EphemerisVariant.PERFECT),
        (2, EphemerisVariant.METHOD2),
    ])
    def test_from_name(self, name, variant):
        """Methods are looked up by their command-line names."""
        assert EphemerisMethod.from_name(name).variant == variant

    def test_unknown_name(self):
        """Unknown method names are rejected."""
        with pytest.raises(ValidationError):
            EphemerisMethod.from_name('3')

    def test_velocity_levels(self):
        """Velocity error levels are 60 mm/s and 1.8 mm/s, in km/s."""
        assert EphemerisMethod.from_name('1').sigma_vel == pytest.approx(60e-6)
        assert EphemerisMethod.from_name('2').sigma_vel == pytest.approx(1.8e-6)
        assert EphemerisMethod.from_name('perfect').sigma_vel == 0.0

    def test_method1_budget_closes(self):
        """Component noise plus the constant offset reproduce the design rms."""
        method = EphemerisMethod.from_name('1')
        spread = sum(std ** 2 for std in method.component_std_m().values())
        assert math.sqrt(spread + method.offset_m() ** 2) == pytest.approx(method.total_rms_m())


class TestColoredNoise:
    """Test the shaping filter and the colored noise generator."""

    def test_impulse_response(self):
        """The first taps follow the difference equation by hand."""
        h = ColoredNoiseFilter.prediction().impulse_response(4)
        assert h[0] == pytest.approx(1.0)
        assert h[1] == pytest.approx(1.9999)
        assert h[2] == pytest.approx(1.99970001)

    def test_low_pass_response(self):
        """Gain is large near DC and vanishes towards Nyquist."""
        freqs, response = ColoredNoiseFilter.prediction().frequency_response(1025)
        assert freqs[-1] < 0.5
        assert abs(response[1]) > 100.0
        assert abs(response[-1]) < 0.01

    def test_scaled_to_target(self):
        """The sample standard deviation equals the target exactly."""
        noise = colored_noise(5000, 3.2, seed=1)
        assert np.std(noise) == pytest.approx(3.2)

    def test_deterministic(self):
        """The same seed yields the same noise."""
        assert np.array_equal(colored_noise(100, 1.0, seed=5), colored_noise(100, 1.0, seed=5))

    def test_low_pass_spectrum(self):
        """Power is concentrated at low frequencies."""
        noise = colored_noise(20000, 1.0, seed=2)
        freqs, psd = signal.welch(noise, nperseg=1024)
        low = psd[(freqs > 0) & (freqs < 0.01)].mean()
        high = psd[freqs > 0.25].mean()
        assert low > 100 * high

    def test_zero_std(self):
        """A zero target gives zeros."""
        assert not np.any(colored_noise(10, 0.0, seed=0))

    def test_too_short(self):
        """At least two samples are required."""
        with pytest.raises(ValidationError):
            colored_noise(1, 1.0)


class TestCorruption:
    """Test the simulated prediction error."""

    def test_perfect_is_identity(self, pass_segment):
        """Perfect ephemeris leaves the positions unchanged."""
        corrupted = corrupt_orbit(pass_segment, EphemerisMethod.from_name('perfect'), seed=0)
        assert np.array_equal(corrupted.positions, pass_segment.positions)

    def test_method2_rms(self, orbit):
        """Method 2 white noise has the design rms."""
        series = orbit.sample(0.0, 20000.0, 1.0)
        method = EphemerisMethod.from_name('2')
        corrupted = corrupt_orbit(series, method, seed=3)
        error_m = np.linalg.norm(corrupted.positions - series.positions, axis=1) * 1e3
        assert math.sqrt(np.mean(error_m ** 2)) == pytest.approx(method.total_rms_m(), rel=0.05)

    def test_method1_larger_than_method2(self, orbit):
        """Method 1 errors are an order of magnitude above Method 2."""
        series = orbit.sample(0.0, 5000.0, 1.0)
        rms = {}
        for name in ('1', '2'):
            corrupted = corrupt_orbit(series, EphemerisMethod.from_name(name), seed=4)
            rms[name] = np.sqrt(np.mean(np.sum((corrupted.positions - series.positions) ** 2, axis=1)))
        assert rms['1'] > 3 * rms['2']


class TestChebyshev:
    """Test per-pass Chebyshev fits."""

    def test_fit_is_accurate(self, orbit, pass_segment):
        """A degree 10 fit of a pass reproduces the orbit to well under a metre."""
        ephemeris = fit_chebyshev(pass_segment.times, pass_segment.positions)
        assert ephemeris.degree == 10
        assert ephemeris.fit_rms_km < 1e-4
        t = pass_segment.times[::37]
        position, velocity = eval_ephemeris(ephemeris, t)
        assert np.allclose(position, orbit.position(t), atol=1e-4)
        assert velocity_error_rms(ephemeris, orbit, t) < 1e-5

    def test_degree_ten_polynomial_is_exact(self):
        """A degree 10 polynomial track is recovered to machine precision."""
        rng = np.random.default_rng(3)
        tracks = [Polynomial(rng.uniform(-500.0, 500.0, size=11), domain=[0.0, 600.0])
                  for _ in range(3)]
        times = np.arange(0.0, 601.0, 2.0)
        ephemeris = fit_chebyshev(times, np.column_stack([track(times) for track in tracks]))
        assert ephemeris.fit_rms_km < 1e-9
        t = np.array([0.5, 123.4, 377.7, 599.9])
        position, velocity = eval_ephemeris(ephemeris, t)
        expected_velocity = np.column_stack([track.deriv()(t) for track in tracks])
        assert np.allclose(position, np.column_stack([track(t) for track in tracks]), rtol=1e-12, atol=1e-9)
        assert np.allclose(velocity, expected_velocity, rtol=1e-10, atol=1e-9)

    def test_constant_position_has_zero_velocity(self):
        """A stationary satellite fits with zero velocity."""
        times = np.arange(100.0, 200.0)
        ephemeris = fit_chebyshev(times, np.tile([10.0, -20.0, 1900.0], (len(times), 1)))
        position, velocity = eval_ephemeris(ephemeris, [100.0, 150.5, 199.0])
        assert np.allclose(position, [10.0, -20.0, 1900.0], rtol=0.0, atol=1e-9)
        assert np.allclose(velocity, 0.0, atol=1e-9)

    def test_linear_motion_has_constant_velocity(self):
        """Uniform motion fits with a constant velocity."""
        times = np.arange(100.0, 200.0)
        start, rate = np.array([10.0, -20.0, 1900.0]), np.array([1.6, -0.02, 0.3])
        ephemeris = fit_chebyshev(times, start + np.outer(times - 100.0, rate))
        _, velocity = eval_ephemeris(ephemeris, [100.0, 137.25, 199.0])
        assert np.allclose(velocity, np.tile(rate, (3, 1)), rtol=0.0, atol=1e-9)

    def test_extrapolation_tolerance(self, pass_segment):
        """Evaluation is allowed within 5 s of the window and rejected beyond it."""
        ephemeris = fit_chebyshev(pass_segment.times, pass_segment.positions)
        ephemeris.position(ephemeris.t_end + 4.0)
        with pytest.raises(EphemerisWindowError):
            ephemeris.position(ephemeris.t_end + 6.0)

    def test_too_few_samples(self):
        """A degree 10 fit needs at least 12 samples."""
        t = np.arange(11.0)
        with pytest.raises(ValidationError):
            fit_chebyshev(t, np.zeros((11, 3)))

    def test_empty_window(self):
        """A record with t_end <= t_start is rejected."""
        with pytest.raises(ValidationError):
            ChebyshevEphemeris(10.0, 10.0, np.zeros((3, 11)))

    def test_record_from_dict_malformed(self):
        """Missing fields raise ValidationError."""
        with pytest.raises(ValidationError):
            ChebyshevEphemeris.from_dict({'t_start': 0.0})


class TestEphemerisSet:
    """Test the multi-pass broadcast message."""

    def test_routes_epochs_to_passes(self):
        """Each epoch is evaluated with its own pass record."""
        first = ChebyshevEphemeris(0.0, 100.0, np.array([[1.0] + [0.0] * 10] * 3), pass_id=0)
        second = ChebyshevEphemeris(200.0, 300.0, np.array([[2.0] + [0.0] * 10] * 3), pass_id=1)
        ephemeris = EphemerisSet([second, first])
        positions = ephemeris.position(np.array([50.0, 250.0]))
        assert np.allclose(positions, [[1.0] * 3, [2.0] * 3])
        assert ephemeris.for_pass(1) is second

    def test_gap_rejected(self):
        """Epochs between windows are not covered."""
        record = ChebyshevEphemeris(0.0, 100.0, np.zeros((3, 11)))
        with pytest.raises(EphemerisWindowError):
            EphemerisSet([record]).position(150.0)

    def test_overlap_rejected(self):
        """Overlapping windows are rejected."""
        a = ChebyshevEphemeris(0.0, 100.0, np.zeros((3, 11)), pass_id=0)
        b = ChebyshevEphemeris(50.0, 150.0, np.zeros((3, 11)), pass_id=1)
        with pytest.raises(ValidationError):
            EphemerisSet([a, b])

    def test_dict_round_trip(self, orbit, receiver):
        """Serialised ephemeris evaluates identically after reloading."""
        series = orbit.sample(0.0, 3 * orbit.period, 1.0)
        windows = first_complete_passes(series, receiver, 5.0, 2)
        ephemeris = build_broadcast_ephemeris(series, windows, EphemerisMethod.from_name('2'), seed=9)
        restored = EphemerisSet.from_dict(ephemeris.to_dict())
        t = np.array([windows[0].t_start + 10.0, windows[1].t_end - 10.0])
        assert np.array_equal(restored.position(t), ephemeris.position(t))

    def test_schema_checked(self):
        """A wrong schema string is rejected."""
        with pytest.raises(ValidationError):
            EphemerisSet.from_dict({'schema': 'other/1', 'passes': []})

    @pytest.mark.slow
    def test_method1_velocity_error_level(self, orbit, receiver):
        """Method 1 broadcast velocity error is at the tens of mm/s level."""
        series = orbit.sample(0.0, 2 * orbit.period, 1.0)
        windows = first_complete_passes(series, receiver, 5.0, 1)
        ephemeris = build_broadcast_ephemeris(series, windows, EphemerisMethod.from_name('1'), seed=11)
        t = np.arange(windows[0].t_start, windows[0].t_end, 5.0)
        rms_mm_s = velocity_error_rms(ephemeris, orbit, t) * 1e6
        assert 1.0 < rms_mm_s < 600.0
