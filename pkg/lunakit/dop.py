"""
Geometric dilution of precision of single-satellite Doppler positioning
"""

import logging
import math
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

import numpy as np

from .core import DEFAULT_CONSTANTS, GeometryError, LunarConstants, ValidationError, surface_point
from .measurement import ClockModel, LinkBudgetParams, observation_sigmas
from .orbit import Orbit, elevation_angle
from .performance import perf_monitor
from .solver import jacobian_rows

if TYPE_CHECKING:
    from .montecarlo import Scenario

logger = logging.getLogger(__name__)

SCHEMA = 'lunakit.gdop/1'
CONDITION_LIMIT = 1e12


def gdop_from_matrix(h_dop: np.ndarray) -> float:
    """sqrt(trace((H^T H)^-1)); +inf when the normal matrix is near singular"""
    h_dop = np.atleast_2d(np.asarray(h_dop, dtype=float))
    if h_dop.shape[0] < h_dop.shape[1]:
        return math.inf
    normal = h_dop.T @ h_dop
    if not np.all(np.isfinite(normal)) or np.linalg.cond(normal) > CONDITION_LIMIT:
        return math.inf
    return float(math.sqrt(np.trace(np.linalg.inv(normal))))


def gdop_from_eigenvalues(h_dop: np.ndarray) -> float:
    """Same quantity as gdop_from_matrix via the eigenvalues of H^T H"""
    h_dop = np.atleast_2d(np.asarray(h_dop, dtype=float))
    eigenvalues = np.linalg.eigvalsh(h_dop.T @ h_dop)
    if eigenvalues[0] <= eigenvalues[-1] / CONDITION_LIMIT:
        return math.inf
    return float(math.sqrt(np.sum(1.0 / eigenvalues)))


def dop_matrix(receiver: np.ndarray, satellites: np.ndarray, velocities: np.ndarray,
               sigma_tot: np.ndarray, constants: LunarConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """Jacobian rows scaled by wavelength over the per-observation error"""
    rows = jacobian_rows(receiver, satellites, velocities)
    return constants.wavelength * rows / np.asarray(sigma_tot, dtype=float)[:, None]


def gdop(receiver: np.ndarray, times: np.ndarray, provider, sigma_tot,
         constants: LunarConstants = DEFAULT_CONSTANTS) -> float:
    """GDOP of the observations at the given epochs from one receiver"""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if len(times) < 3:
        raise GeometryError(f"GDOP needs at least 3 observations, got {len(times)}")
    sigma_tot = np.broadcast_to(np.asarray(sigma_tot, dtype=float), times.shape)
    h_dop = dop_matrix(receiver, provider.position(times), provider.velocity(times), sigma_tot, constants)
    return gdop_from_matrix(h_dop)


class GdopEvaluator:
    """Per-receiver GDOP over a fixed span of the truth orbit"""

    def __init__(self, orbit: Orbit, t_start: float, t_end: float, sigma_vel: float,
                 link: LinkBudgetParams, clock: ClockModel, mask_deg: float,
                 sample_step: float = 1.0):
        self.series = orbit.sample(t_start, t_end, sample_step)
        self.constants = orbit.constants
        self.sigma_vel = sigma_vel
        self.link = link
        self.clock = clock
        self.mask_deg = mask_deg

    def visible(self, receiver: np.ndarray) -> np.ndarray:
        return elevation_angle(receiver, self.series.positions) > math.radians(self.mask_deg)

    def gdop_at(self, receiver: np.ndarray) -> Tuple[float, int]:
        """GDOP and number of visible samples for one receiver position"""
        mask = self.visible(receiver)
        count = int(np.count_nonzero(mask))
        if count < 3:
            return math.inf, count
        satellites = self.series.positions[mask]
        ranges = np.linalg.norm(satellites - receiver, axis=1)
        sigmas = observation_sigmas(self.link, self.clock, self.sigma_vel, ranges, self.constants)
        h_dop = dop_matrix(receiver, satellites, self.series.velocities[mask],
                           sigmas['sigma_tot'], self.constants)
        return gdop_from_matrix(h_dop), count


class GdopGrid:
    """GDOP values on a latitude/longitude grid of cells"""

    def __init__(self, lat_edges: np.ndarray, lon_edges: np.ndarray, values: Optional[np.ndarray] = None):
        self.lat_edges = np.asarray(lat_edges, dtype=float)
        self.lon_edges = np.asarray(lon_edges, dtype=float)
        if len(self.lat_edges) < 2 or len(self.lon_edges) < 2:
            raise ValidationError("A GDOP grid needs at least one cell per axis")
        if np.any(np.diff(self.lat_edges) <= 0) or np.any(np.diff(self.lon_edges) <= 0):
            raise ValidationError("GDOP grid edges must be increasing")
        shape = (len(self.lat_edges) - 1, len(self.lon_edges) - 1)
        self.values = np.full(shape, math.inf) if values is None else np.asarray(values, dtype=float)
        if self.values.shape != shape:
            raise ValidationError(f"GDOP values must have shape {shape}")

    @classmethod
    def polar(cls, lat_min: float = 70.0, lat_max: float = 90.0, lat_step: float = 1.0,
              lon_step: float = 5.0) -> 'GdopGrid':
        lat_edges = np.linspace(lat_min, lat_max, int(round((lat_max - lat_min) / lat_step)) + 1)
        lon_edges = np.linspace(0.0, 360.0, int(round(360.0 / lon_step)) + 1)
        return cls(lat_edges, lon_edges)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def lat_centers(self) -> np.ndarray:
        return 0.5 * (self.lat_edges[:-1] + self.lat_edges[1:])

    @property
    def lon_centers(self) -> np.ndarray:
        return 0.5 * (self.lon_edges[:-1] + self.lon_edges[1:])

    def cell_centers(self) -> List[Tuple[int, int, float, float]]:
        """(lat index, lon index, lat, lon) of every cell"""
        return [(i, j, lat, lon)
                for i, lat in enumerate(self.lat_centers)
                for j, lon in enumerate(self.lon_centers)]

    def rows(self) -> List[Dict[str, float]]:
        return [{'lat': lat, 'lon': lon, 'gdop': float(self.values[i, j])}
                for i, j, lat, lon in self.cell_centers()]

    def finite_fraction(self) -> float:
        return float(np.mean(np.isfinite(self.values)))

    def summary(self) -> Dict[str, Any]:
        finite = self.values[np.isfinite(self.values)]
        return {
            'schema': SCHEMA,
            'shape': list(self.shape),
            'finite_fraction': self.finite_fraction(),
            'min': float(finite.min()) if finite.size else math.inf,
            'median': float(np.median(finite)) if finite.size else math.inf,
            'max': float(finite.max()) if finite.size else math.inf,
        }


def gdop_map(scenario: 'Scenario', n_passes: Optional[int] = None,
             grid: Optional[GdopGrid] = None, sample_step: float = 1.0) -> GdopGrid:
    """GDOP of every grid cell from the same consecutive revolutions of the orbit"""
    n_passes = n_passes if n_passes is not None else scenario.gdop_passes
    if n_passes < 1:
        raise ValidationError("GDOP map needs at least one pass")
    grid = grid or GdopGrid.polar()
    orbit = scenario.orbit()
    t_start = orbit.time_of_periapsis(0.0)
    evaluator = GdopEvaluator(
        orbit, t_start, t_start + n_passes * orbit.period, scenario.ephemeris_method.sigma_vel,
        scenario.link, scenario.clock, scenario.mask_deg, sample_step,
    )

    with perf_monitor.timed('gdop_map'):
        for i, j, lat, lon in grid.cell_centers():
            receiver = surface_point(lat, lon, 0.0, scenario.constants)
            grid.values[i, j], _ = evaluator.gdop_at(receiver)

    blind = int(np.count_nonzero(~np.isfinite(grid.values)))
    if blind:
        logger.warning(f"{blind} grid cell(s) without usable geometry after {n_passes} passes")
    logger.info(f"GDOP map over {grid.shape[0]}x{grid.shape[1]} cells from {n_passes} passes")
    return grid
