"""
Doppler measurement model

Forward model shared by simulation and estimation: light-time corrected
range, its time derivative, the received Doppler shift, and the error
budget of each observation.
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from .core import (
    DEFAULT_CONSTANTS, ArrayLike, ConvergenceError, GeometryError, LunarConstants,
    ValidationError, rotate_about_z, rotate_about_z_derivative, typed_fields,
)
from .lunar_constants import CLOCK_MODEL, DEFAULT_ELEVATION_MASK, LINK_BUDGET
from .orbit import elevation_angle

logger = logging.getLogger(__name__)

LIGHT_TIME_TOLERANCE = 1e-12  # s
LIGHT_TIME_MAX_ITERATIONS = 10
STENCIL_STEP = 0.1  # s

SCHEMA = 'lunakit.observations/1'


def _from_dict(cls, data: Dict[str, Any]):
    return cls(**typed_fields(cls, data, cls.__name__))


@dataclass(frozen=True)
class LinkBudgetParams:
    """Receiver link budget for the carrier tracking loop"""

    eirp_dbw: float = LINK_BUDGET['EIRP']
    rx_gain_db: float = LINK_BUDGET['RX_GAIN']
    system_temperature_k: float = LINK_BUDGET['SYSTEM_TEMPERATURE']
    noise_figure_db: float = LINK_BUDGET['NOISE_FIGURE']
    pll_bandwidth_hz: float = LINK_BUDGET['PLL_BANDWIDTH']
    integration_time_s: float = LINK_BUDGET['INTEGRATION_TIME']
    boltzmann_dbw: float = LINK_BUDGET['BOLTZMANN']
    reference_temperature_k: float = LINK_BUDGET['REFERENCE_TEMPERATURE']

    def __post_init__(self):
        for name in ('system_temperature_k', 'pll_bandwidth_hz', 'integration_time_s',
                     'reference_temperature_k'):
            if getattr(self, name) <= 0:
                raise ValidationError(f"Link budget {name} must be positive")
        if self.noise_figure_db < 0:
            raise ValidationError("Noise figure must be non-negative")

    @property
    def equivalent_temperature_db(self) -> float:
        """10 log10 of the system plus receiver noise temperature"""
        receiver = self.reference_temperature_k * (10.0 ** (self.noise_figure_db / 10.0) - 1.0)
        return 10.0 * math.log10(self.system_temperature_k + receiver)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LinkBudgetParams':
        return _from_dict(cls, data)


@dataclass(frozen=True)
class ClockModel:
    """Satellite and receiver oscillator frequency stability"""

    satellite_stability: float = CLOCK_MODEL['SATELLITE_FRACTIONAL_STABILITY']
    receiver_h0: float = CLOCK_MODEL['RECEIVER_H0']
    receiver_h_1: float = CLOCK_MODEL['RECEIVER_H_1']
    receiver_h_2: float = CLOCK_MODEL['RECEIVER_H_2']
    sampling_time_s: float = CLOCK_MODEL['SAMPLING_TIME']

    def __post_init__(self):
        for field in fields(self):
            if getattr(self, field.name) < 0:
                raise ValidationError(f"Clock parameter {field.name} must be non-negative")
        if self.sampling_time_s == 0:
            raise ValidationError("Clock sampling time must be positive")

    def receiver_white_variance(self) -> float:
        return self.receiver_h0 / (2.0 * self.sampling_time_s)

    def receiver_slow_variance(self) -> float:
        """Flicker and random-walk frequency variance, held constant over a pass"""
        return (4.0 * self.receiver_h_1
                + (4.0 / 3.0) * math.pi ** 2 * self.sampling_time_s * self.receiver_h_2)

    def receiver_fractional_std(self) -> float:
        return math.sqrt(self.receiver_white_variance() + self.receiver_slow_variance())

    def sigma_receiver(self, constants: LunarConstants = DEFAULT_CONSTANTS) -> float:
        """Receiver clock drift error in km/s"""
        return constants.c * self.receiver_fractional_std()

    def sigma_satellite(self, constants: LunarConstants = DEFAULT_CONSTANTS) -> float:
        """Satellite clock drift error in km/s"""
        return constants.c * self.satellite_stability

    def receiver_drift(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Fractional frequency error of the receiver clock over one pass"""
        slow = rng.normal(0.0, math.sqrt(self.receiver_slow_variance()))
        return slow + rng.normal(0.0, math.sqrt(self.receiver_white_variance()), n)

    def satellite_drift(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Fractional frequency error of the satellite clock per sample"""
        return rng.normal(0.0, self.satellite_stability, n)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ClockModel':
        return _from_dict(cls, data)


@dataclass(frozen=True)
class ErrorBudgetConfig:
    """Which error sources the simulator injects"""

    ephemeris: bool = True
    satellite_clock: bool = True
    receiver_clock: bool = True
    carrier_tracking: bool = True

    @classmethod
    def noiseless(cls) -> 'ErrorBudgetConfig':
        return cls(False, False, False, False)

    @classmethod
    def only(cls, source: str) -> 'ErrorBudgetConfig':
        """Exactly one source enabled"""
        names = [field.name for field in fields(cls)]
        if source not in names:
            raise ValidationError(f"Unknown error source {source!r}")
        return cls(**{name: name == source for name in names})

    def to_dict(self) -> Dict[str, bool]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ErrorBudgetConfig':
        return _from_dict(cls, data)


def _light_time(receiver: np.ndarray, provider, t_R: np.ndarray,
                receiver_clock_bias: float, constants: LunarConstants) -> Tuple[np.ndarray, np.ndarray, int]:
    """Fixed-point propagation delay, the rotated transmit-time satellite position, iterations"""
    delay = np.zeros_like(t_R)
    for iteration in range(1, LIGHT_TIME_MAX_ITERATIONS + 1):
        transmit = t_R - receiver_clock_bias - delay
        satellite = rotate_about_z(provider.position(transmit), constants.omega_moon * delay)
        distance = np.linalg.norm(receiver - satellite, axis=-1)
        updated = distance / constants.c
        converged = np.all(np.abs(updated - delay) < LIGHT_TIME_TOLERANCE)
        delay = updated
        if converged:
            if np.any(distance == 0.0):
                raise GeometryError("Receiver coincides with the satellite")
            return delay, satellite, iteration
    raise ConvergenceError(f"Light-time iteration did not converge in {LIGHT_TIME_MAX_ITERATIONS} steps")


def propagation_delay(receiver: np.ndarray, provider, t_R: ArrayLike,
                      receiver_clock_bias: float = 0.0,
                      constants: LunarConstants = DEFAULT_CONSTANTS,
                      full_output: bool = False):
    """Signal travel time (s) from satellite to receiver at reception epoch(s) t_R"""
    receiver = np.asarray(receiver, dtype=float)
    scalar = np.ndim(t_R) == 0
    t = np.atleast_1d(np.asarray(t_R, dtype=float))
    delay, _, iterations = _light_time(receiver, provider, t, receiver_clock_bias, constants)
    result = float(delay[0]) if scalar else delay
    if full_output:
        return result, iterations
    return result


def accumulated_delta_range(receiver: np.ndarray, t_R: ArrayLike, provider,
                            receiver_clock_bias: float = 0.0,
                            satellite_clock_bias: float = 0.0,
                            constants: LunarConstants = DEFAULT_CONSTANTS) -> ArrayLike:
    """Light-time corrected range plus clock offsets (km)"""
    receiver = np.asarray(receiver, dtype=float)
    scalar = np.ndim(t_R) == 0
    t = np.atleast_1d(np.asarray(t_R, dtype=float))
    _, satellite, _ = _light_time(receiver, provider, t, receiver_clock_bias, constants)
    adr = (np.linalg.norm(receiver - satellite, axis=-1)
           + constants.c * (receiver_clock_bias - satellite_clock_bias))
    return float(adr[0]) if scalar else adr


def five_point_derivative(func: Callable[[np.ndarray], np.ndarray], t: ArrayLike,
                          dt: float = STENCIL_STEP) -> np.ndarray:
    """Fourth-order central difference of func at t"""
    t = np.asarray(t, dtype=float)
    offsets = np.array([-2.0, -1.0, 1.0, 2.0])
    weights = np.array([1.0, -8.0, 8.0, -1.0])
    stencil = t[..., None] + offsets * dt
    values = np.asarray(func(stencil.ravel())).reshape(stencil.shape)
    return values @ weights / (12.0 * dt)


def adr_rate(receiver: np.ndarray, t_R: ArrayLike, provider,
             dt: float = STENCIL_STEP,
             constants: LunarConstants = DEFAULT_CONSTANTS) -> ArrayLike:
    """Rate of change of the accumulated delta range (km/s) by the five-point stencil"""
    receiver = np.asarray(receiver, dtype=float)
    scalar = np.ndim(t_R) == 0
    rate = five_point_derivative(
        lambda t: accumulated_delta_range(receiver, t, provider, constants=constants),
        np.atleast_1d(np.asarray(t_R, dtype=float)), dt,
    )
    return float(rate[0]) if scalar else rate


class LineOfSight:
    """Light-time solved geometry between a receiver and the satellite"""

    def __init__(self, receiver: np.ndarray, t_R: np.ndarray, provider,
                 constants: LunarConstants = DEFAULT_CONSTANTS):
        receiver = np.asarray(receiver, dtype=float)
        t = np.atleast_1d(np.asarray(t_R, dtype=float))
        delay, _, _ = _light_time(receiver, provider, t, 0.0, constants)
        transmit = t - delay
        angle = constants.omega_moon * delay
        raw_position = provider.position(transmit)
        raw_velocity = provider.velocity(transmit)

        self.delay = delay
        self.satellite = rotate_about_z(raw_position, angle)
        self.satellite_velocity = rotate_about_z(raw_velocity, angle)
        self.relative = receiver - self.satellite
        self.range = np.linalg.norm(self.relative, axis=-1)
        self.unit = self.relative / self.range[:, None]
        self._rotation_term = constants.omega_moon * np.sum(
            self.unit * rotate_about_z_derivative(raw_position, angle), axis=-1
        )
        self._c = constants.c

    def range_rate(self) -> np.ndarray:
        """Exact light-time range rate including the rotation correction"""
        projected = np.sum(self.unit * self.satellite_velocity, axis=-1)
        return -projected / (1.0 - projected / self._c + self._rotation_term / self._c)


def range_rate(receiver: np.ndarray, t_R: ArrayLike, provider,
               constants: LunarConstants = DEFAULT_CONSTANTS) -> ArrayLike:
    """Analytic rate of the light-time corrected range (km/s)"""
    scalar = np.ndim(t_R) == 0
    rate = LineOfSight(receiver, t_R, provider, constants).range_rate()
    return float(rate[0]) if scalar else rate


def free_space_path_loss_db(range_km: ArrayLike, constants: LunarConstants = DEFAULT_CONSTANTS) -> ArrayLike:
    range_km = np.asarray(range_km, dtype=float)
    if np.any(range_km <= 0):
        raise ValidationError("Range must be positive for the path loss")
    return 20.0 * np.log10(4.0 * math.pi * constants.f0 * range_km / constants.c)


def cn0(link: LinkBudgetParams, range_km: ArrayLike,
        constants: LunarConstants = DEFAULT_CONSTANTS) -> ArrayLike:
    """Carrier-to-noise density ratio (dB-Hz) at the given range"""
    received = link.eirp_dbw - free_space_path_loss_db(range_km, constants)
    gain_over_temperature = link.rx_gain_db - link.equivalent_temperature_db
    value = received + gain_over_temperature - link.boltzmann_dbw
    return float(value) if np.ndim(value) == 0 else value


def sigma_meas(link: LinkBudgetParams, cn0_dbhz: ArrayLike,
               constants: LunarConstants = DEFAULT_CONSTANTS) -> ArrayLike:
    """Carrier tracking error (km/s) of the frequency estimate at a given C/N0"""
    ratio = 10.0 ** (np.asarray(cn0_dbhz, dtype=float) / 10.0)
    T = link.integration_time_s
    scale = constants.c / (2.0 * math.pi * constants.f0 * T)
    value = scale * np.sqrt(link.pll_bandwidth_hz / ratio) * (1.0 + 1.0 / (2.0 * T * ratio))
    return float(value) if np.ndim(value) == 0 else value


def sigma_tot(sigma_vel: ArrayLike, sigma_clk_sat: ArrayLike,
              sigma_clk_rec: ArrayLike, sigma_meas_value: ArrayLike) -> ArrayLike:
    """Root-sum-square of the independent Doppler error sources (km/s)"""
    parts = [np.asarray(x, dtype=float) for x in (sigma_vel, sigma_clk_sat, sigma_clk_rec, sigma_meas_value)]
    if any(np.any(part < 0) for part in parts):
        raise ValidationError("Error components must be non-negative")
    total = np.sqrt(sum(part ** 2 for part in parts))
    if np.any(total <= 0):
        raise ValidationError("Total measurement error must be positive")
    return float(total) if np.ndim(total) == 0 else total


class DopplerObservation:
    """One Doppler measurement at a reception epoch"""

    def __init__(self, t_R: float, doppler_hz: float, cn0_dbhz: float,
                 sigma_tot: float, pass_id: int = 0):
        self.t_R = float(t_R)
        self.doppler_hz = float(doppler_hz)
        self.cn0_dbhz = float(cn0_dbhz)
        self.sigma_tot = float(sigma_tot)
        self.pass_id = int(pass_id)

    def to_dict(self) -> Dict[str, Any]:
        return {
            't_R': self.t_R,
            'doppler_hz': self.doppler_hz,
            'cn0_dbhz': self.cn0_dbhz,
            'sigma_tot': self.sigma_tot,
            'pass_id': self.pass_id,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DopplerObservation':
        return cls(data['t_R'], data['doppler_hz'], data['cn0_dbhz'],
                   data['sigma_tot'], data.get('pass_id', 0))


class ObservationSet:
    """Columnar collection of Doppler observations ordered by reception epoch"""

    def __init__(self, t_R: np.ndarray, doppler_hz: np.ndarray, cn0_dbhz: np.ndarray,
                 sigma_tot: np.ndarray, pass_id: np.ndarray,
                 constants: LunarConstants = DEFAULT_CONSTANTS):
        self.t_R = np.asarray(t_R, dtype=float)
        self.doppler_hz = np.asarray(doppler_hz, dtype=float)
        self.cn0_dbhz = np.asarray(cn0_dbhz, dtype=float)
        self.sigma_tot = np.asarray(sigma_tot, dtype=float)
        self.pass_id = np.asarray(pass_id, dtype=int)
        self.constants = constants
        self.validate(constants)

    def validate(self, constants: LunarConstants = DEFAULT_CONSTANTS):
        n = len(self.t_R)
        for name in ('doppler_hz', 'cn0_dbhz', 'sigma_tot', 'pass_id'):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"Observation column {name} has the wrong length")
        if n > 1 and np.any(np.diff(self.t_R) <= 0):
            raise ValidationError("Observation epochs must be strictly increasing")
        bad = ~np.isfinite(self.doppler_hz) | ~np.isfinite(self.t_R)
        if np.any(bad):
            raise ValidationError("Non-finite observation", row=int(np.flatnonzero(bad)[0]))
        bad = ~(self.sigma_tot > 0)
        if np.any(bad):
            raise ValidationError("Observation sigma_tot must be positive", row=int(np.flatnonzero(bad)[0]))
        # |D| <= f0 * 3 km/s / c
        bound = constants.f0 * 3.0 / constants.c
        bad = np.abs(self.doppler_hz) > bound
        if np.any(bad):
            raise ValidationError(f"Doppler beyond {bound:.0f} Hz", row=int(np.flatnonzero(bad)[0]))

    @classmethod
    def from_observations(cls, observations: List[DopplerObservation],
                          constants: LunarConstants = DEFAULT_CONSTANTS) -> 'ObservationSet':
        return cls(
            [o.t_R for o in observations], [o.doppler_hz for o in observations],
            [o.cn0_dbhz for o in observations], [o.sigma_tot for o in observations],
            [o.pass_id for o in observations], constants,
        )

    @classmethod
    def concatenate(cls, sets: List['ObservationSet']) -> 'ObservationSet':
        if not sets:
            raise ValidationError("Nothing to concatenate")
        constants = sets[0].constants
        if any(s.constants != constants for s in sets[1:]):
            raise ValidationError("Observation sets were built with different constants")
        return cls(
            np.concatenate([s.t_R for s in sets]), np.concatenate([s.doppler_hz for s in sets]),
            np.concatenate([s.cn0_dbhz for s in sets]), np.concatenate([s.sigma_tot for s in sets]),
            np.concatenate([s.pass_id for s in sets]), constants,
        )

    def __len__(self) -> int:
        return len(self.t_R)

    def __getitem__(self, index: int) -> DopplerObservation:
        return DopplerObservation(self.t_R[index], self.doppler_hz[index], self.cn0_dbhz[index],
                                  self.sigma_tot[index], self.pass_id[index])

    def __iter__(self) -> Iterator[DopplerObservation]:
        return (self[i] for i in range(len(self)))

    def select(self, mask: np.ndarray) -> 'ObservationSet':
        return ObservationSet(self.t_R[mask], self.doppler_hz[mask], self.cn0_dbhz[mask],
                              self.sigma_tot[mask], self.pass_id[mask], self.constants)

    def pass_ids(self) -> List[int]:
        return sorted(set(int(p) for p in self.pass_id))

    def for_pass(self, pass_id: int) -> 'ObservationSet':
        return self.select(self.pass_id == pass_id)

    def middle_slice(self, count: int) -> 'ObservationSet':
        """count consecutive observations centred in the set"""
        if len(self) <= count:
            return self
        start = (len(self) - count) // 2
        mask = np.zeros(len(self), dtype=bool)
        mask[start:start + count] = True
        return self.select(mask)


def observation_sigmas(link: LinkBudgetParams, clock: ClockModel, sigma_vel: float,
                       range_km: ArrayLike,
                       constants: LunarConstants = DEFAULT_CONSTANTS) -> Dict[str, np.ndarray]:
    """A-priori error components (km/s) and C/N0 for observations at the given ranges"""
    cn0_dbhz = np.atleast_1d(cn0(link, range_km, constants))
    tracking = np.atleast_1d(sigma_meas(link, cn0_dbhz, constants))
    n = len(tracking)
    return {
        'cn0_dbhz': cn0_dbhz,
        'sigma_vel': np.full(n, sigma_vel),
        'sigma_clk_sat': np.full(n, clock.sigma_satellite(constants)),
        'sigma_clk_rec': np.full(n, clock.sigma_receiver(constants)),
        'sigma_meas': tracking,
        'sigma_tot': np.atleast_1d(sigma_tot(sigma_vel, clock.sigma_satellite(constants),
                                             clock.sigma_receiver(constants), tracking)),
    }


def synthesize_pass(receiver: np.ndarray, t_R: np.ndarray, truth, pass_id: int,
                    sigma_vel: float, errors: ErrorBudgetConfig,
                    link: LinkBudgetParams, clock: ClockModel,
                    rng: Optional[np.random.Generator] = None,
                    constants: LunarConstants = DEFAULT_CONSTANTS,
                    mask_deg: float = DEFAULT_ELEVATION_MASK) -> ObservationSet:
    """Simulated Doppler observations of one pass from the truth trajectory"""
    t = np.atleast_1d(np.asarray(t_R, dtype=float))
    elevation = np.atleast_1d(elevation_angle(receiver, truth.position(t)))
    hidden = np.flatnonzero(elevation <= math.radians(mask_deg))
    if hidden.size:
        first = int(hidden[0])
        raise ValidationError(
            f"Satellite below the {mask_deg} deg mask at t_R={t[first]} "
            f"({math.degrees(elevation[first]):.2f} deg, {hidden.size} epoch(s))"
        )
    rng = rng if rng is not None else np.random.default_rng()
    los = LineOfSight(receiver, t, truth, constants)
    rate = los.range_rate()
    sigmas = observation_sigmas(link, clock, sigma_vel, los.range, constants)

    n = len(t)
    if errors.receiver_clock:
        rate = rate + constants.c * clock.receiver_drift(n, rng)
    if errors.satellite_clock:
        rate = rate - constants.c * clock.satellite_drift(n, rng)
    if errors.carrier_tracking:
        rate = rate + rng.normal(0.0, 1.0, n) * sigmas['sigma_meas']

    doppler = -rate / constants.wavelength
    logger.debug(f"Pass {pass_id}: synthesised {n} observations, "
                 f"|D| max {np.max(np.abs(doppler)):.1f} Hz")
    return ObservationSet(t, doppler, sigmas['cn0_dbhz'], sigmas['sigma_tot'],
                          np.full(n, pass_id), constants)


def synthesize_doppler(receiver: np.ndarray, t_R: float, truth,
                       errors: Optional[ErrorBudgetConfig] = None,
                       sigma_vel: float = 0.0,
                       link: Optional[LinkBudgetParams] = None,
                       clock: Optional[ClockModel] = None,
                       rng: Optional[np.random.Generator] = None,
                       pass_id: int = 0,
                       constants: LunarConstants = DEFAULT_CONSTANTS,
                       mask_deg: float = DEFAULT_ELEVATION_MASK) -> DopplerObservation:
    """One simulated Doppler observation"""
    observations = synthesize_pass(
        receiver, np.array([t_R]), truth, pass_id, sigma_vel,
        errors if errors is not None else ErrorBudgetConfig.noiseless(),
        link or LinkBudgetParams(), clock or ClockModel(), rng, constants, mask_deg,
    )
    return observations[0]
