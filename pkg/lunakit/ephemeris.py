"""
Broadcast ephemeris generation and evaluation

The satellite broadcasts, per pass, a 10th-order Chebyshev polynomial fit of
its own predicted orbit. Prediction error is simulated on 1 Hz truth samples
before the fit, either as colored along/cross/radial noise plus a constant
offset (Method 1) or as white position noise (Method 2).
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import chebyshev
from scipy import signal

from .core import ArrayLike, EphemerisWindowError, ValidationError, unit_vectors
from .lunar_constants import (
    CHEBYSHEV_DEGREE, EPHEMERIS_METHOD2_POSITION_STD, EPHEMERIS_OBSERVED,
    EPHEMERIS_PREDICTED, EPHEMERIS_VELOCITY, EXTRAPOLATION_TOLERANCE,
    PREDICTION_NOISE_FILTER, EphemerisVariant,
)
from .orbit import PassWindow, SatelliteStateSeries

logger = logging.getLogger(__name__)

SCHEMA = 'lunakit.ephemeris/1'

SeedLike = Union[None, int, np.random.Generator]


class EphemerisMethod:
    """Ephemeris error model and the statistics that parameterise it"""

    _NAMES = {
        'perfect': EphemerisVariant.PERFECT,
        '0': EphemerisVariant.PERFECT,
        '1': EphemerisVariant.METHOD1,
        '2': EphemerisVariant.METHOD2,
    }

    def __init__(self, variant: EphemerisVariant):
        self.variant = EphemerisVariant(variant)

    @classmethod
    def from_name(cls, name: Union[str, int]) -> 'EphemerisMethod':
        key = str(name).strip().lower()
        if key not in cls._NAMES:
            raise ValidationError(f"Unknown ephemeris method: {name!r} (use 1, 2 or perfect)")
        return cls(cls._NAMES[key])

    @property
    def name(self) -> str:
        return 'perfect' if self.variant == EphemerisVariant.PERFECT else str(int(self.variant))

    @property
    def velocity_std_mm_s(self) -> float:
        return EPHEMERIS_VELOCITY[self.variant]

    @property
    def sigma_vel(self) -> float:
        """Velocity error standard deviation in km/s"""
        return self.velocity_std_mm_s * 1e-6

    def component_std_m(self) -> Dict[str, float]:
        """Per-axis noise std in metres (along/cross/radial, or x/y/z for Method 2)"""
        if self.variant == EphemerisVariant.METHOD1:
            return {
                axis.lower(): math.hypot(EPHEMERIS_OBSERVED[axis][1], EPHEMERIS_PREDICTED[axis][1])
                for axis in ('ALONG', 'CROSS', 'RADIAL')
            }
        if self.variant == EphemerisVariant.METHOD2:
            per_axis = EPHEMERIS_METHOD2_POSITION_STD / math.sqrt(3.0)
            return {'x': per_axis, 'y': per_axis, 'z': per_axis}
        return {}

    def total_rms_m(self) -> float:
        """Design rms of the position error magnitude in metres"""
        if self.variant == EphemerisVariant.METHOD1:
            return math.hypot(EPHEMERIS_OBSERVED['TOTAL'][0], EPHEMERIS_PREDICTED['TOTAL'][0])
        if self.variant == EphemerisVariant.METHOD2:
            return EPHEMERIS_METHOD2_POSITION_STD
        return 0.0

    def offset_m(self) -> float:
        """Magnitude of the constant Method 1 offset closing the rms budget"""
        if self.variant != EphemerisVariant.METHOD1:
            return 0.0
        spread = sum(std ** 2 for std in self.component_std_m().values())
        return math.sqrt(max(self.total_rms_m() ** 2 - spread, 0.0))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, EphemerisMethod) and other.variant == self.variant

    def __hash__(self) -> int:
        return hash(self.variant)

    def __repr__(self) -> str:
        return f"EphemerisMethod({self.name})"


class ColoredNoiseFilter:
    """IIR shaping filter applied to white Gaussian noise"""

    def __init__(self, numerator: Sequence[float], denominator: Sequence[float],
                 warmup: int = PREDICTION_NOISE_FILTER['WARMUP']):
        self.numerator = np.asarray(numerator, dtype=float)
        self.denominator = np.asarray(denominator, dtype=float)
        self.warmup = int(warmup)
        if self.denominator[0] == 0.0:
            raise ValidationError("Leading denominator coefficient must be non-zero")

    @classmethod
    def prediction(cls) -> 'ColoredNoiseFilter':
        """Low-pass shape of orbit prediction error"""
        return cls(PREDICTION_NOISE_FILTER['NUMERATOR'], PREDICTION_NOISE_FILTER['DENOMINATOR'])

    def apply(self, samples: np.ndarray) -> np.ndarray:
        return signal.lfilter(self.numerator, self.denominator, samples)

    def impulse_response(self, n: int) -> np.ndarray:
        impulse = np.zeros(n)
        impulse[0] = 1.0
        return self.apply(impulse)

    def frequency_response(self, n_points: int = 512) -> Tuple[np.ndarray, np.ndarray]:
        """Normalised frequencies (cycles/sample) and complex gain"""
        w, h = signal.freqz(self.numerator, self.denominator, worN=n_points)
        return w / (2.0 * math.pi), h


def colored_noise(n: int, target_std: float, seed: SeedLike = None,
                  noise_filter: Optional[ColoredNoiseFilter] = None) -> np.ndarray:
    """n samples of filtered Gaussian noise scaled to a sample std of target_std"""
    if n < 2:
        raise ValidationError(f"Need at least 2 noise samples, got {n}")
    if target_std < 0:
        raise ValidationError(f"Noise std must be non-negative, got {target_std}")
    if target_std == 0:
        return np.zeros(n)
    noise_filter = noise_filter or ColoredNoiseFilter.prediction()
    rng = np.random.default_rng(seed)

    white = rng.standard_normal(n + noise_filter.warmup)
    shaped = noise_filter.apply(white)[noise_filter.warmup:]
    spread = np.std(shaped)
    if spread == 0.0:
        raise ValidationError("Filtered noise has zero variance")
    return shaped * (target_std / spread)


def _orbital_frame(positions: np.ndarray,
                   velocities: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Along-track, cross-track and radial unit vectors per sample"""
    radial = unit_vectors(positions)
    cross = unit_vectors(np.cross(positions, velocities))
    along = np.cross(cross, radial)
    return along, cross, radial


def corrupt_orbit(truth: SatelliteStateSeries, method: EphemerisMethod,
                  seed: SeedLike = None) -> SatelliteStateSeries:
    """Truth series with the method's prediction error added to every position"""
    if method.variant == EphemerisVariant.PERFECT:
        return SatelliteStateSeries(truth.times.copy(), truth.positions.copy(), truth.velocities.copy())

    rng = np.random.default_rng(seed)
    n = len(truth)
    std = method.component_std_m()

    if method.variant == EphemerisVariant.METHOD1:
        along, cross, radial = _orbital_frame(truth.positions, truth.velocities)
        error_m = (colored_noise(n, std['along'], rng)[:, None] * along
                   + colored_noise(n, std['cross'], rng)[:, None] * cross
                   + colored_noise(n, std['radial'], rng)[:, None] * radial)
        direction = rng.standard_normal(3)
        direction /= np.linalg.norm(direction)
        error_m = error_m + method.offset_m() * direction
    else:
        error_m = rng.standard_normal((n, 3)) * np.array([std['x'], std['y'], std['z']])

    logger.debug(f"Ephemeris {method.name}: rms position error "
                 f"{math.sqrt(np.mean(np.sum(error_m ** 2, axis=1))):.2f} m over {n} samples")
    return SatelliteStateSeries(truth.times.copy(), truth.positions + error_m * 1e-3,
                                truth.velocities.copy())


class ChebyshevEphemeris:
    """Per-pass Chebyshev representation of the satellite position"""

    def __init__(self, t_start: float, t_end: float, coefficients: np.ndarray,
                 pass_id: int = 0, fit_rms_km: float = 0.0,
                 tolerance: float = EXTRAPOLATION_TOLERANCE):
        self.t_start = float(t_start)
        self.t_end = float(t_end)
        self.coefficients = np.asarray(coefficients, dtype=float)  # (3, degree + 1), km
        self.pass_id = int(pass_id)
        self.fit_rms_km = float(fit_rms_km)
        self.tolerance = tolerance

        if self.t_end <= self.t_start:
            raise ValidationError(f"Empty ephemeris window [{t_start}, {t_end}]")
        if self.coefficients.ndim != 2 or self.coefficients.shape[0] != 3:
            raise ValidationError("Ephemeris coefficients must be a 3 x (degree + 1) matrix")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValidationError("Ephemeris coefficients must be finite")

    @property
    def degree(self) -> int:
        return self.coefficients.shape[1] - 1

    def covers(self, t: ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t >= self.t_start - self.tolerance) & (t <= self.t_end + self.tolerance)

    def _normalised_time(self, t: ArrayLike) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if not np.all(self.covers(t)):
            raise EphemerisWindowError(
                f"Epoch outside pass {self.pass_id} window [{self.t_start}, {self.t_end}] "
                f"(+/- {self.tolerance} s)"
            )
        return (2.0 * t - (self.t_start + self.t_end)) / (self.t_end - self.t_start)

    def position(self, t: ArrayLike) -> np.ndarray:
        tau = self._normalised_time(t)
        return np.moveaxis(chebyshev.chebval(tau, self.coefficients.T), 0, -1)

    def velocity(self, t: ArrayLike) -> np.ndarray:
        tau = self._normalised_time(t)
        derivative = chebyshev.chebder(self.coefficients.T, axis=0)
        scale = 2.0 / (self.t_end - self.t_start)
        return scale * np.moveaxis(chebyshev.chebval(tau, derivative), 0, -1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'pass_id': self.pass_id,
            't_start': self.t_start,
            't_end': self.t_end,
            'coefficients_km': self.coefficients.tolist(),
            'fit_rms_km': self.fit_rms_km,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ChebyshevEphemeris':
        try:
            return cls(
                t_start=data['t_start'],
                t_end=data['t_end'],
                coefficients=np.array(data['coefficients_km'], dtype=float),
                pass_id=data.get('pass_id', 0),
                fit_rms_km=data.get('fit_rms_km', 0.0),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"Malformed ephemeris record: {e}")


def fit_chebyshev(times: np.ndarray, positions: np.ndarray, pass_id: int = 0,
                  degree: int = CHEBYSHEV_DEGREE) -> ChebyshevEphemeris:
    """Least-squares Chebyshev fit of positions over their own time window"""
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if len(times) < degree + 2:
        raise ValidationError(f"Need at least {degree + 2} samples for a degree {degree} fit, "
                              f"got {len(times)}")
    if len(np.unique(times)) <= degree:
        raise ValidationError("Too few distinct epochs for the Chebyshev fit")

    t_start, t_end = float(times[0]), float(times[-1])
    tau = (2.0 * times - (t_start + t_end)) / (t_end - t_start)
    coefficients, (_, rank, _, _) = chebyshev.chebfit(tau, positions, degree, full=True)
    if rank < degree + 1:
        raise ValidationError(f"Rank-deficient Chebyshev fit (rank {rank})")

    residual = chebyshev.chebval(tau, coefficients).T - positions
    fit_rms = float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))
    logger.debug(f"Pass {pass_id}: Chebyshev fit rms {fit_rms * 1e3:.3f} m over {len(times)} samples")
    return ChebyshevEphemeris(t_start, t_end, coefficients.T, pass_id, fit_rms)


def eval_ephemeris(ephemeris: ChebyshevEphemeris, t: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Position (km) and velocity (km/s) from a broadcast ephemeris"""
    return ephemeris.position(t), ephemeris.velocity(t)


class EphemerisSet:
    """Broadcast ephemeris for a sequence of passes"""

    def __init__(self, records: List[ChebyshevEphemeris]):
        if not records:
            raise ValidationError("Ephemeris set needs at least one pass")
        self.records = sorted(records, key=lambda r: r.t_start)
        for previous, current in zip(self.records, self.records[1:]):
            if current.t_start <= previous.t_end:
                raise ValidationError(
                    f"Ephemeris windows of passes {previous.pass_id} and {current.pass_id} overlap"
                )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def for_pass(self, pass_id: int) -> ChebyshevEphemeris:
        for record in self.records:
            if record.pass_id == pass_id:
                return record
        raise EphemerisWindowError(f"No ephemeris for pass {pass_id}")

    def _evaluate(self, t: ArrayLike, attribute: str) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        flat = np.atleast_1d(t).ravel()
        out = np.empty((len(flat), 3))
        assigned = np.zeros(len(flat), dtype=bool)
        for record in self.records:
            mask = record.covers(flat) & ~assigned
            if np.any(mask):
                out[mask] = getattr(record, attribute)(flat[mask])
                assigned |= mask
        if not np.all(assigned):
            raise EphemerisWindowError(f"Epoch {flat[~assigned][0]} not covered by any pass")
        return out.reshape(t.shape + (3,))

    def position(self, t: ArrayLike) -> np.ndarray:
        return self._evaluate(t, 'position')

    def velocity(self, t: ArrayLike) -> np.ndarray:
        return self._evaluate(t, 'velocity')

    def to_dict(self) -> Dict[str, Any]:
        return {
            'schema': SCHEMA,
            'degree': self.records[0].degree,
            'passes': [record.to_dict() for record in self.records],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EphemerisSet':
        if data.get('schema') != SCHEMA:
            raise ValidationError(f"Expected ephemeris schema {SCHEMA}, got {data.get('schema')!r}")
        return cls([ChebyshevEphemeris.from_dict(record) for record in data.get('passes', [])])


def build_broadcast_ephemeris(truth: SatelliteStateSeries, passes: List[PassWindow],
                              method: EphemerisMethod, seed: SeedLike = None) -> EphemerisSet:
    """Corrupt the whole truth series once, then fit each pass separately"""
    corrupted = corrupt_orbit(truth, method, seed)
    records = []
    for window in passes:
        segment = corrupted.slice(window.start_index, window.stop_index)
        records.append(fit_chebyshev(segment.times, segment.positions, window.pass_id))
    logger.info(f"Built ephemeris {method.name} for {len(records)} pass(es)")
    return EphemerisSet(records)


def velocity_error_rms(ephemeris, truth, times: np.ndarray) -> float:
    """Rms velocity difference (km/s) between an ephemeris and a truth provider"""
    difference = ephemeris.velocity(times) - truth.velocity(times)
    return float(np.sqrt(np.mean(np.sum(difference ** 2, axis=-1))))
