"""
Two-body orbit propagation, visibility and pass detection

The truth trajectory of the navigation satellite is a Keplerian orbit about
the Moon's centre, expressed in the inertial frame and rotated into the
Moon-fixed frame at each epoch.
"""

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .core import (
    DEFAULT_CONSTANTS, ArrayLike, ConvergenceError, EphemerisWindowError, GeometryError,
    LunarConstants, ValidationError, rotate_about_z, rotate_about_z_derivative,
)
from .lunar_constants import DEFAULT_ELEVATION_MASK, EXTRAPOLATION_TOLERANCE, FROZEN_ORBIT

logger = logging.getLogger(__name__)

KEPLER_TOLERANCE = 1e-12
KEPLER_MAX_ITERATIONS = 50


@dataclass(frozen=True)
class KeplerianElements:
    """Classical orbital elements at the scenario epoch (km, deg)"""

    a_km: float = FROZEN_ORBIT['SEMI_MAJOR_AXIS']
    e: float = FROZEN_ORBIT['ECCENTRICITY']
    i_deg: float = FROZEN_ORBIT['INCLINATION']
    omega_deg: float = FROZEN_ORBIT['ARG_PERIAPSIS']
    raan_deg: float = FROZEN_ORBIT['RAAN']
    m0_deg: float = FROZEN_ORBIT['MEAN_ANOMALY']
    epoch: float = 0.0

    def __post_init__(self):
        for field in fields(self):
            if not math.isfinite(getattr(self, field.name)):
                raise ValidationError(f"Orbital element {field.name} is not finite")
        if self.a_km <= 0:
            raise ValidationError(f"Semi-major axis must be positive, got {self.a_km}")
        if not 0.0 <= self.e < 1.0:
            raise ValidationError(f"Eccentricity must be in [0, 1), got {self.e}")
        check_perilune(self, DEFAULT_CONSTANTS)

    @property
    def perilune_km(self) -> float:
        return self.a_km * (1.0 - self.e)

    def mean_motion(self, constants: LunarConstants = DEFAULT_CONSTANTS) -> float:
        """Mean motion in rad/s"""
        return math.sqrt(constants.mu_moon / self.a_km ** 3)

    def period(self, constants: LunarConstants = DEFAULT_CONSTANTS) -> float:
        """Orbital period in seconds"""
        return 2.0 * math.pi / self.mean_motion(constants)

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'KeplerianElements':
        known = {field.name for field in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"Unknown orbital elements: {', '.join(sorted(unknown))}")
        try:
            values = {key: float(value) for key, value in data.items()}
        except (TypeError, ValueError) as e:
            raise ValidationError(f"Orbital elements must be numbers: {e}") from e
        return cls(**values)


def check_perilune(elements: KeplerianElements, constants: LunarConstants):
    """Reject orbits whose perilune lies on or below the mean lunar surface"""
    if elements.perilune_km <= constants.moon_radius:
        raise ValidationError(
            f"Perilune radius {elements.perilune_km:.1f} km is not above the lunar surface "
            f"({constants.moon_radius} km)"
        )


def solve_kepler(mean_anomaly: ArrayLike, e: float,
                 tol: float = KEPLER_TOLERANCE,
                 max_iterations: int = KEPLER_MAX_ITERATIONS) -> np.ndarray:
    """Eccentric anomaly from Kepler's equation E - e sin E = M by Newton iteration"""
    M = np.mod(np.asarray(mean_anomaly, dtype=float), 2.0 * math.pi)
    E = M + e * np.sin(M)
    for _ in range(max_iterations):
        step = (E - e * np.sin(E) - M) / (1.0 - e * np.cos(E))
        E = E - step
        if np.all(np.abs(step) < tol):
            return E
    raise ConvergenceError(
        f"Kepler iteration did not converge in {max_iterations} steps (e={e})"
    )


def _orientation(elements: KeplerianElements) -> Tuple[np.ndarray, np.ndarray]:
    """Perifocal P and Q unit vectors in the inertial frame"""
    raan = math.radians(elements.raan_deg)
    inc = math.radians(elements.i_deg)
    argp = math.radians(elements.omega_deg)
    cO, sO = math.cos(raan), math.sin(raan)
    ci, si = math.cos(inc), math.sin(inc)
    cw, sw = math.cos(argp), math.sin(argp)
    p_vec = np.array([cO * cw - sO * sw * ci, sO * cw + cO * sw * ci, sw * si])
    q_vec = np.array([-cO * sw - sO * cw * ci, -sO * sw + cO * cw * ci, cw * si])
    return p_vec, q_vec


def propagate_inertial(elements: KeplerianElements, t: ArrayLike,
                       constants: LunarConstants = DEFAULT_CONSTANTS) -> Tuple[np.ndarray, np.ndarray]:
    """Inertial position (km) and velocity (km/s) at epoch(s) t"""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = elements.mean_motion(constants)
    a, e = elements.a_km, elements.e

    M = math.radians(elements.m0_deg) + n * (t - elements.epoch)
    E = solve_kepler(M, e)
    cos_E, sin_E = np.cos(E), np.sin(E)
    root = math.sqrt(1.0 - e * e)
    denom = 1.0 - e * cos_E

    x_p = a * (cos_E - e)
    y_p = a * root * sin_E
    vx_p = -a * n * sin_E / denom
    vy_p = a * n * root * cos_E / denom

    p_vec, q_vec = _orientation(elements)
    position = np.outer(x_p, p_vec) + np.outer(y_p, q_vec)
    velocity = np.outer(vx_p, p_vec) + np.outer(vy_p, q_vec)
    if scalar:
        return position[0], velocity[0]
    return position, velocity


def inertial_to_fixed(position: np.ndarray, velocity: np.ndarray, t: ArrayLike,
                      constants: LunarConstants = DEFAULT_CONSTANTS,
                      frame_alignment: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Rotate inertial states into the Moon-fixed frame at epoch(s) t"""
    angle = frame_alignment + constants.omega_moon * np.asarray(t, dtype=float)
    fixed_position = rotate_about_z(position, angle)
    fixed_velocity = (rotate_about_z(velocity, angle)
                      + constants.omega_moon * rotate_about_z_derivative(position, angle))
    return fixed_position, fixed_velocity


def propagate(elements: KeplerianElements, t: ArrayLike,
              constants: LunarConstants = DEFAULT_CONSTANTS,
              frame_alignment: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """Moon-fixed position (km) and velocity (km/s) at epoch(s) t"""
    position, velocity = propagate_inertial(elements, t, constants)
    return inertial_to_fixed(position, velocity, t, constants, frame_alignment)


class SatelliteStateSeries:
    """Satellite states sampled at strictly increasing epochs"""

    def __init__(self, times: np.ndarray, positions: np.ndarray, velocities: np.ndarray):
        self.times = np.asarray(times, dtype=float)
        self.positions = np.asarray(positions, dtype=float)
        self.velocities = np.asarray(velocities, dtype=float)

        if self.times.ndim != 1 or len(self.times) == 0:
            raise ValidationError("State series needs a non-empty 1-D time array")
        if self.positions.shape != (len(self.times), 3) or self.velocities.shape != self.positions.shape:
            raise ValidationError("State series positions and velocities must be (n, 3)")
        if np.any(np.diff(self.times) <= 0):
            raise ValidationError("State series epochs must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def slice(self, start: int, stop: int) -> 'SatelliteStateSeries':
        """Sub-series of samples [start, stop)"""
        return SatelliteStateSeries(
            self.times[start:stop], self.positions[start:stop], self.velocities[start:stop]
        )

    @property
    def time_step(self) -> float:
        if len(self.times) < 2:
            return 0.0
        return float(np.median(np.diff(self.times)))


class Orbit:
    """Continuous two-body truth trajectory in the Moon-fixed frame"""

    def __init__(self, elements: Optional[KeplerianElements] = None,
                 constants: LunarConstants = DEFAULT_CONSTANTS,
                 frame_alignment: float = 0.0):
        self.elements = elements if elements is not None else KeplerianElements()
        self.constants = constants
        check_perilune(self.elements, constants)
        self.frame_alignment = frame_alignment

    @property
    def period(self) -> float:
        return self.elements.period(self.constants)

    def state(self, t: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        return propagate(self.elements, t, self.constants, self.frame_alignment)

    def position(self, t: ArrayLike) -> np.ndarray:
        return self.state(t)[0]

    def velocity(self, t: ArrayLike) -> np.ndarray:
        return self.state(t)[1]

    def inertial_state(self, t: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
        return propagate_inertial(self.elements, t, self.constants)

    def specific_energy(self, t: ArrayLike) -> np.ndarray:
        """Two-body specific orbital energy (km^2/s^2) from the inertial state"""
        position, velocity = self.inertial_state(t)
        return (0.5 * np.sum(velocity ** 2, axis=-1)
                - self.constants.mu_moon / np.linalg.norm(position, axis=-1))

    def sample(self, t_start: float, t_end: float, step: float = 1.0) -> SatelliteStateSeries:
        """Truth states every step seconds over [t_start, t_end]"""
        if step <= 0 or t_end < t_start:
            raise ValidationError(f"Bad sampling request [{t_start}, {t_end}] step {step}")
        count = int(math.floor((t_end - t_start) / step + 1e-9)) + 1
        times = t_start + step * np.arange(count)
        positions, velocities = self.state(times)
        return SatelliteStateSeries(times, positions, velocities)

    def with_anomaly_offset(self, offset_deg: float) -> 'Orbit':
        """Same orbit with the epoch mean anomaly shifted"""
        elements = replace(self.elements, m0_deg=(self.elements.m0_deg + offset_deg) % 360.0)
        return Orbit(elements, self.constants, self.frame_alignment)

    def time_of_periapsis(self, after: float = 0.0) -> float:
        """First periapsis passage at or after the given epoch"""
        n = self.elements.mean_motion(self.constants)
        mean_anomaly = math.radians(self.elements.m0_deg) + n * (after - self.elements.epoch)
        return after + ((-mean_anomaly) % (2.0 * math.pi)) / n


class SampledTrajectory:
    """Continuous trajectory interpolated from an imported state series"""

    def __init__(self, series: SatelliteStateSeries,
                 tolerance: float = EXTRAPOLATION_TOLERANCE):
        if len(series) < 2:
            raise ValidationError("Need at least two states to interpolate a trajectory")
        self.series = series
        self.tolerance = tolerance
        self._spline = CubicHermiteSpline(series.times, series.positions, series.velocities, axis=0)
        self._derivative = self._spline.derivative()

    def _check(self, t: np.ndarray):
        low = self.series.times[0] - self.tolerance
        high = self.series.times[-1] + self.tolerance
        if np.any(t < low) or np.any(t > high):
            raise EphemerisWindowError(
                f"Epoch outside imported trajectory [{self.series.times[0]}, {self.series.times[-1]}]"
            )

    def position(self, t: ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        self._check(t)
        return self._spline(t)

    def velocity(self, t: ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        self._check(t)
        return self._derivative(t)


def elevation_angle(receiver: np.ndarray, satellite: np.ndarray) -> ArrayLike:
    """Elevation (rad) of satellite position(s) above the receiver's local horizon"""
    receiver = np.asarray(receiver, dtype=float)
    satellite = np.asarray(satellite, dtype=float)
    radius = np.linalg.norm(receiver)
    if radius == 0.0:
        raise GeometryError("Receiver at the Moon's centre has no local horizon")
    line_of_sight = satellite - receiver
    distance = np.linalg.norm(line_of_sight, axis=-1)
    if np.any(distance == 0.0):
        raise GeometryError("Satellite coincides with the receiver")
    sin_el = (line_of_sight @ receiver) / (distance * radius)
    return np.arcsin(np.clip(sin_el, -1.0, 1.0))


class PassWindow:
    """A maximal run of samples with the satellite above the elevation mask"""

    def __init__(self, pass_id: int, start_index: int, stop_index: int,
                 t_start: float, t_end: float,
                 clipped_start: bool = False, clipped_end: bool = False):
        self.pass_id = pass_id
        self.start_index = start_index
        self.stop_index = stop_index  # exclusive
        self.t_start = t_start
        self.t_end = t_end
        self.clipped_start = clipped_start
        self.clipped_end = clipped_end

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start

    @property
    def complete(self) -> bool:
        return not (self.clipped_start or self.clipped_end)

    def __len__(self) -> int:
        return self.stop_index - self.start_index

    def __repr__(self) -> str:
        return (f"PassWindow(id={self.pass_id}, t=[{self.t_start:.0f}, {self.t_end:.0f}], "
                f"samples={len(self)})")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'pass_id': self.pass_id,
            't_start': self.t_start,
            't_end': self.t_end,
            'samples': len(self),
        }


def find_passes(series: SatelliteStateSeries, receiver: np.ndarray,
                mask_deg: float = DEFAULT_ELEVATION_MASK) -> List[PassWindow]:
    """Visibility windows of the receiver over the series, in time order"""
    if not 0.0 <= mask_deg < 90.0:
        raise ValidationError(f"Elevation mask must be in [0, 90) deg, got {mask_deg}")
    visible = elevation_angle(receiver, series.positions) > math.radians(mask_deg)
    edges = np.diff(np.concatenate(([0], visible.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)

    passes = []
    for pass_id, (start, stop) in enumerate(zip(starts, stops)):
        passes.append(PassWindow(
            pass_id, int(start), int(stop),
            float(series.times[start]), float(series.times[stop - 1]),
            clipped_start=bool(start == 0),
            clipped_end=bool(stop == len(series)),
        ))
    logger.debug(f"Found {len(passes)} passes above {mask_deg} deg")
    return passes


def first_complete_passes(series: SatelliteStateSeries, receiver: np.ndarray,
                          mask_deg: float, count: int) -> List[PassWindow]:
    """First count passes not clipped by the series boundaries, renumbered from 0"""
    complete = [p for p in find_passes(series, receiver, mask_deg) if p.complete]
    selected = complete[:count]
    for pass_id, window in enumerate(selected):
        window.pass_id = pass_id
    return selected


def pass_durations(orbit: Orbit, receivers: Iterable[np.ndarray], span_s: float,
                   mask_deg: float = DEFAULT_ELEVATION_MASK, step: float = 1.0) -> np.ndarray:
    """Durations (s) of every complete pass of the given receivers over a span"""
    series = orbit.sample(0.0, span_s, step)
    durations = []
    for receiver in receivers:
        durations.extend(p.duration for p in find_passes(series, receiver, mask_deg) if p.complete)
    return np.asarray(durations, dtype=float)
