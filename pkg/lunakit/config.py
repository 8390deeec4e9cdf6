"""
Scenario configuration files

A scenario file is a JSON document with optional sections; anything left out
takes the reference value. Unknown keys are rejected at every level so a typo
never silently falls back to a default.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Optional

import numpy as np

from .core import DEFAULT_CONSTANTS, LunarConstants, ValidationError, surface_point, typed_fields
from .ephemeris import EphemerisMethod
from .lunar_constants import DEFAULT_ELEVATION_MASK, RECEIVER_DISTRIBUTION
from .measurement import ClockModel, ErrorBudgetConfig, LinkBudgetParams
from .montecarlo import Scenario
from .orbit import KeplerianElements
from .solver import SolverConfig

logger = logging.getLogger(__name__)

SCHEMA = 'lunakit.config/1'

SECTIONS = ('schema', 'seed', 'constants', 'orbit', 'receiver', 'scenario', 'errors',
            'link', 'clock', 'solver', 'gdop', 'output')


def _build(cls, data: Any, section: str):
    values = typed_fields(cls, data, section)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"Bad values in '{section}': {exc}") from exc


@dataclass(frozen=True)
class OrbitConfig:
    """Orbital elements plus the frame alignment at the epoch"""

    a_km: float = KeplerianElements.a_km
    e: float = KeplerianElements.e
    i_deg: float = KeplerianElements.i_deg
    omega_deg: float = KeplerianElements.omega_deg
    raan_deg: float = KeplerianElements.raan_deg
    m0_deg: float = KeplerianElements.m0_deg
    frame_alignment_deg: float = 0.0

    def elements(self) -> KeplerianElements:
        return KeplerianElements(self.a_km, self.e, self.i_deg, self.omega_deg,
                                 self.raan_deg, self.m0_deg)


@dataclass(frozen=True)
class ReceiverConfig:
    """Fixed receiver for simulate, and the Monte Carlo draw bounds"""

    lat_deg: float = 85.0
    lon_deg: float = 30.0
    alt_km: float = 0.0
    lat_min: float = RECEIVER_DISTRIBUTION['LAT_MIN']
    lat_max: float = RECEIVER_DISTRIBUTION['LAT_MAX']
    lon_min: float = RECEIVER_DISTRIBUTION['LON_MIN']
    lon_max: float = RECEIVER_DISTRIBUTION['LON_MAX']
    alt_min: float = RECEIVER_DISTRIBUTION['ALT_MIN']
    alt_max: float = RECEIVER_DISTRIBUTION['ALT_MAX']

    def __post_init__(self):
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValidationError(f"Receiver latitude {self.lat_deg} outside [-90, 90]")
        if not 0.0 <= self.lon_deg < 360.0:
            raise ValidationError(f"Receiver longitude {self.lon_deg} outside [0, 360)")
        if not -90.0 <= self.lat_min <= self.lat_max <= 90.0:
            raise ValidationError("Receiver latitude bounds must satisfy -90 <= min <= max <= 90")
        if not 0.0 <= self.lon_min <= self.lon_max <= 360.0:
            raise ValidationError("Receiver longitude bounds must satisfy 0 <= min <= max <= 360")
        for name in ('alt_km', 'alt_min', 'alt_max'):
            if abs(getattr(self, name)) > 100.0:
                raise ValidationError(f"Receiver {name} must be within 100 km of the surface")
        if self.alt_min > self.alt_max:
            raise ValidationError("Receiver altitude bounds must satisfy min <= max")


@dataclass(frozen=True)
class RunConfig:
    """Trial count, passes per solve and the broadcast ephemeris model"""

    n_trials: int = 100
    n_passes: int = 1
    ephemeris: str = '1'
    mask_deg: float = DEFAULT_ELEVATION_MASK
    random_anomaly: bool = True
    sample_step: float = 1.0
    min_pass_samples: int = 120

    def __post_init__(self):
        if self.n_trials < 1 or self.n_passes < 1:
            raise ValidationError("n_trials and n_passes must be at least 1")
        if not 0.0 <= self.mask_deg < 90.0:
            raise ValidationError(f"Elevation mask {self.mask_deg} outside [0, 90)")
        if not 0.0 < self.sample_step <= 10.0:
            raise ValidationError(f"Sample step {self.sample_step} s outside (0, 10]")
        EphemerisMethod.from_name(self.ephemeris)


@dataclass(frozen=True)
class GdopConfig:
    """Polar GDOP map grid"""

    n_passes: int = 10
    lat_min: float = 70.0
    lat_max: float = 90.0
    lat_step: float = 1.0
    lon_step: float = 5.0
    sample_step: float = 1.0

    def __post_init__(self):
        if self.n_passes < 1:
            raise ValidationError("GDOP map needs at least one pass")
        if not -90.0 <= self.lat_min < self.lat_max <= 90.0:
            raise ValidationError("GDOP latitude bounds must satisfy -90 <= min < max <= 90")
        if self.lat_step <= 0 or self.lon_step <= 0 or self.sample_step <= 0:
            raise ValidationError("GDOP grid steps must be positive")


@dataclass(frozen=True)
class OutputConfig:
    dir: str = 'out'


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete, validated contents of a scenario file"""

    seed: int = 0
    constants: LunarConstants = DEFAULT_CONSTANTS
    orbit: OrbitConfig = field(default_factory=OrbitConfig)
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    scenario: RunConfig = field(default_factory=RunConfig)
    errors: ErrorBudgetConfig = field(default_factory=ErrorBudgetConfig)
    link: LinkBudgetParams = field(default_factory=LinkBudgetParams)
    clock: ClockModel = field(default_factory=ClockModel)
    solver: SolverConfig = field(default_factory=SolverConfig)
    gdop: GdopConfig = field(default_factory=GdopConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValidationError(f"Seed must be a non-negative integer, got {self.seed!r}")
        if self.orbit.a_km * (1.0 - self.orbit.e) <= self.constants.moon_radius:
            raise ValidationError("Orbit perilune lies inside the Moon")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ScenarioConfig':
        if not isinstance(data, dict):
            raise ValidationError("Scenario config must be a JSON object")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ValidationError(f"Unknown config sections: {', '.join(sorted(unknown))}")
        schema = data.get('schema', SCHEMA)
        if schema != SCHEMA:
            raise ValidationError(f"Expected config schema {SCHEMA}, got {schema!r}")

        config = cls(
            seed=data.get('seed', 0),
            constants=LunarConstants.from_dict(data.get('constants', {})),
            orbit=_build(OrbitConfig, data.get('orbit', {}), 'orbit'),
            receiver=_build(ReceiverConfig, data.get('receiver', {}), 'receiver'),
            scenario=_build(RunConfig, data.get('scenario', {}), 'scenario'),
            errors=_build(ErrorBudgetConfig, data.get('errors', {}), 'errors'),
            link=_build(LinkBudgetParams, data.get('link', {}), 'link'),
            clock=_build(ClockModel, data.get('clock', {}), 'clock'),
            solver=_build(SolverConfig, data.get('solver', {}), 'solver'),
            gdop=_build(GdopConfig, data.get('gdop', {}), 'gdop'),
            output=_build(OutputConfig, data.get('output', {}), 'output'),
        )
        _check_finite(config)
        return config

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['constants'] = self.constants.to_dict()
        data['schema'] = SCHEMA
        return data

    def scenario_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the configuration"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()

    def with_overrides(self, seed: Optional[int] = None, trials: Optional[int] = None,
                       passes: Optional[int] = None, ephemeris: Optional[str] = None,
                       out: Optional[str] = None) -> 'ScenarioConfig':
        """Copy with command-line values applied"""
        run = self.scenario
        if trials is not None:
            run = replace(run, n_trials=trials)
        if passes is not None:
            run = replace(run, n_passes=passes)
        if ephemeris is not None:
            run = replace(run, ephemeris=str(ephemeris))
        return replace(
            self,
            seed=self.seed if seed is None else seed,
            scenario=run,
            output=self.output if out is None else OutputConfig(out),
        )

    @property
    def ephemeris_method(self) -> EphemerisMethod:
        return EphemerisMethod.from_name(self.scenario.ephemeris)

    def receiver_position(self) -> np.ndarray:
        r = self.receiver
        return surface_point(r.lat_deg, r.lon_deg, r.alt_km, self.constants)

    def to_scenario(self) -> Scenario:
        run = self.scenario
        r = self.receiver
        return Scenario(
            seed=self.seed,
            n_trials=run.n_trials,
            ephemeris_method=self.ephemeris_method,
            n_passes=run.n_passes,
            mask_deg=run.mask_deg,
            errors=self.errors,
            lat_range=(r.lat_min, r.lat_max),
            lon_range=(r.lon_min, r.lon_max),
            alt_range=(r.alt_min, r.alt_max),
            elements=self.orbit.elements(),
            frame_alignment_deg=self.orbit.frame_alignment_deg,
            random_anomaly=run.random_anomaly,
            constants=self.constants,
            link=self.link,
            clock=self.clock,
            solver=self.solver,
            sample_step=run.sample_step,
            min_pass_samples=run.min_pass_samples,
            gdop_passes=self.gdop.n_passes,
        )


def load_config(path: Optional[str] = None) -> ScenarioConfig:
    """Read a scenario file; None gives the reference configuration"""
    if path is None:
        return ScenarioConfig()
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    config = ScenarioConfig.from_dict(data)
    logger.info(f"Loaded scenario config {path} (hash {config.scenario_hash()[:12]})")
    return config


def _check_finite(config: ScenarioConfig):
    """Reject NaN or infinite numbers anywhere in the configuration"""
    def walk(value, path):
        if isinstance(value, dict):
            for key, item in value.items():
                walk(item, f"{path}.{key}" if path else key)
        elif isinstance(value, (list, tuple)):
            for index, item in enumerate(value):
                walk(item, f"{path}[{index}]")
        elif isinstance(value, float) and not math.isfinite(value):
            raise ValidationError(f"Config value {path} is not finite")

    walk(config.to_dict(), '')
