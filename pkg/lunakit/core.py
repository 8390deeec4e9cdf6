"""
Core frame definitions and exceptions for lunakit

Positions are in km in the Moon-fixed frame unless stated otherwise; times
are seconds since the scenario epoch on a uniform time scale.
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from .lunar_constants import PHYSICAL_CONSTANTS

logger = logging.getLogger(__name__)

# Seconds since the scenario epoch
Epoch = float

ArrayLike = Union[float, np.ndarray]


class LunaKitError(Exception):
    """Base exception for lunakit errors"""
    pass


class ValidationError(LunaKitError):
    """Invalid input, configuration value or file content"""

    def __init__(self, message: str, row: Optional[int] = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class EphemerisWindowError(LunaKitError):
    """Ephemeris evaluated outside its fit window"""
    pass


class ConvergenceError(LunaKitError):
    """An iterative solution did not converge"""
    pass


class GeometryError(LunaKitError):
    """Degenerate observation or frame geometry"""
    pass


def _coerce(kind: Any, value: Any, where: str) -> Any:
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise ValidationError(f"{where} must be true or false, got {value!r}")
    is_number = isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        if is_number and float(value).is_integer():
            return int(value)
        raise ValidationError(f"{where} must be an integer, got {value!r}")
    if kind is float:
        if is_number:
            return float(value)
        raise ValidationError(f"{where} must be a number, got {value!r}")
    if kind is str:
        if isinstance(value, str):
            return value
        if is_number:
            return str(value)
        raise ValidationError(f"{where} must be a string, got {value!r}")
    return value


def typed_fields(cls, data: Any, section: str) -> Dict[str, Any]:
    """Check a mapping against a dataclass's fields and coerce each value to its field type"""
    if not isinstance(data, dict):
        raise ValidationError(f"Config section '{section}' must be an object")
    kinds = {f.name: f.type for f in fields(cls)}
    unknown = set(data) - set(kinds)
    if unknown:
        raise ValidationError(f"Unknown keys in '{section}': {', '.join(sorted(unknown))}")
    return {key: _coerce(kinds[key], value, f"{section}.{key}") for key, value in data.items()}


@dataclass(frozen=True)
class LunarConstants:
    """Physical constants shared by every computation"""

    c: float = PHYSICAL_CONSTANTS['SPEED_OF_LIGHT']
    moon_radius: float = PHYSICAL_CONSTANTS['MOON_RADIUS']
    f0: float = PHYSICAL_CONSTANTS['CARRIER_FREQUENCY']
    omega_moon: float = PHYSICAL_CONSTANTS['MOON_ROTATION_RATE']
    mu_moon: float = PHYSICAL_CONSTANTS['MOON_GM']

    def __post_init__(self):
        for field in fields(self):
            value = getattr(self, field.name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValidationError(f"Constant {field.name} must be positive, got {value!r}")

    @property
    def wavelength(self) -> float:
        """Carrier wavelength λ0 = c / f0 in km"""
        return self.c / self.f0

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LunarConstants':
        return cls(**typed_fields(cls, data, 'constants'))


DEFAULT_CONSTANTS = LunarConstants()


def moon_rotation_matrix(dt: float, constants: LunarConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Rotation taking a vector into the Moon-fixed frame dt seconds later"""
    angle = constants.omega_moon * dt
    c, s = math.cos(angle), math.sin(angle)
    return np.array([
        [c, s, 0.0],
        [-s, c, 0.0],
        [0.0, 0.0, 1.0],
    ])


def rotate_about_z(vectors: np.ndarray, angle: ArrayLike) -> np.ndarray:
    """Apply moon_rotation_matrix for the given angle(s) to an (..., 3) array"""
    vectors = np.asarray(vectors, dtype=float)
    c = np.cos(angle)
    s = np.sin(angle)
    out = np.empty(np.broadcast(vectors[..., 0], c).shape + (3,))
    out[..., 0] = c * vectors[..., 0] + s * vectors[..., 1]
    out[..., 1] = -s * vectors[..., 0] + c * vectors[..., 1]
    out[..., 2] = vectors[..., 2]
    return out


def rotate_about_z_derivative(vectors: np.ndarray, angle: ArrayLike) -> np.ndarray:
    """Derivative of rotate_about_z with respect to the angle"""
    vectors = np.asarray(vectors, dtype=float)
    c = np.cos(angle)
    s = np.sin(angle)
    out = np.empty(np.broadcast(vectors[..., 0], c).shape + (3,))
    out[..., 0] = -s * vectors[..., 0] + c * vectors[..., 1]
    out[..., 1] = -c * vectors[..., 0] - s * vectors[..., 1]
    out[..., 2] = 0.0
    return out


def surface_point(lat_deg: float, lon_deg: float, alt_km: float = 0.0,
                  constants: LunarConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Moon-fixed position of a point on (or above) the spherical Moon"""
    if not -90.0 <= lat_deg <= 90.0:
        raise ValidationError(f"Latitude {lat_deg} outside [-90, 90]")
    if not 0.0 <= lon_deg < 360.0:
        raise ValidationError(f"Longitude {lon_deg} outside [0, 360)")
    radius = constants.moon_radius + alt_km
    if radius <= 0:
        raise ValidationError(f"Altitude {alt_km} km puts the point below the Moon's centre")
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    return radius * np.array([
        math.cos(lat) * math.cos(lon),
        math.cos(lat) * math.sin(lon),
        math.sin(lat),
    ])


def spherical_coordinates(position: np.ndarray,
                          constants: LunarConstants = DEFAULT_CONSTANTS) -> Tuple[float, float, float]:
    """Latitude (deg), longitude in [0, 360) deg and altitude (km) of a position"""
    position = np.asarray(position, dtype=float)
    radius = float(np.linalg.norm(position))
    if radius == 0.0:
        raise GeometryError("Position at the Moon's centre has no direction")
    lat = math.degrees(math.asin(max(-1.0, min(1.0, position[2] / radius))))
    lon = math.degrees(math.atan2(position[1], position[0])) % 360.0
    return lat, lon, radius - constants.moon_radius


def unit_vectors(vectors: np.ndarray) -> np.ndarray:
    """Normalise an (..., 3) array along its last axis"""
    vectors = np.asarray(vectors, dtype=float)
    norms = np.linalg.norm(vectors, axis=-1, keepdims=True)
    if np.any(norms == 0.0):
        raise GeometryError("Cannot normalise a zero-length vector")
    return vectors / norms
