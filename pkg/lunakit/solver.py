"""
Receiver positioning from single-satellite Doppler observations

Three-step pipeline per pass:

1. algebraic initial estimate from the Doppler cone angles around the point
   of closest approach;
2. Gauss-Newton on the lunar surface with an Armijo line search;
3. unconstrained weighted Gauss-Newton with a soft line search.

A single pass leaves a mirror solution on the other side of the satellite's
ground track; it is resolved by cost comparison (one pass) or by clustering
the per-pass solutions (several passes).
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from .core import (
    DEFAULT_CONSTANTS, GeometryError, LunarConstants, ValidationError, typed_fields, unit_vectors,
)
from .lunar_constants import SolverStep
from .measurement import LineOfSight, ObservationSet, adr_rate
from .performance import perf_monitor

logger = logging.getLogger(__name__)

SCHEMA = 'lunakit.solution/1'


@dataclass(frozen=True)
class SolverConfig:
    """Tuning of the positioning pipeline (distances in km)"""

    step1_window: int = 100
    step2_tolerance_km: float = 1e-3
    step3_tolerance_km: float = 1e-5
    max_iterations: int = 100
    armijo_alpha: float = 0.1
    armijo_epsilon: float = 1.0
    armijo_beta: float = 0.5
    armijo_min_epsilon: float = 2.0 ** -60
    line_search_alpha_max: float = 10.0
    line_search_max_iterations: int = 100
    line_search_beta: float = 0.99
    line_search_rho: float = 1e-3
    ambiguity_tolerance_km: float = 1.0
    refine_mirror: bool = True

    def __post_init__(self):
        if self.step1_window < 3:
            raise ValidationError("Step 1 needs a window of at least 3 observations")
        if self.max_iterations < 1 or self.line_search_max_iterations < 1:
            raise ValidationError("Iteration limits must be at least 1")
        if not 0 < self.armijo_alpha < 1 or not 0 < self.armijo_beta < 1:
            raise ValidationError("Armijo alpha and beta must lie in (0, 1)")
        if not 0 < self.line_search_rho < self.line_search_beta < 1:
            raise ValidationError("Soft line search needs 0 < rho < beta < 1")
        for name in ('step2_tolerance_km', 'step3_tolerance_km', 'armijo_epsilon',
                     'armijo_min_epsilon', 'line_search_alpha_max', 'ambiguity_tolerance_km'):
            if getattr(self, name) <= 0:
                raise ValidationError(f"Solver {name} must be positive")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SolverConfig':
        return cls(**typed_fields(cls, data, 'solver'))


DEFAULT_SOLVER_CONFIG = SolverConfig()


class StepRecord:
    """Outcome of one pipeline step"""

    def __init__(self, step: SolverStep, position: np.ndarray, cost: float,
                 iterations: int = 0, converged: bool = True):
        self.step = SolverStep(step)
        self.position = np.asarray(position, dtype=float)
        self.cost = float(cost)
        self.iterations = int(iterations)
        self.converged = bool(converged)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'step': int(self.step),
            'position_km': self.position.tolist(),
            'cost': self.cost,
            'iterations': self.iterations,
            'converged': self.converged,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StepRecord':
        return cls(data['step'], data['position_km'], data['cost'],
                   data.get('iterations', 0), data.get('converged', True))


class SolverEstimate:
    """Receiver position estimate with its provenance"""

    def __init__(self, position: np.ndarray, steps: List[StepRecord],
                 flags: Optional[List[str]] = None,
                 mirror_position: Optional[np.ndarray] = None,
                 mirror_cost: Optional[float] = None,
                 pass_estimates: Optional[List['SolverEstimate']] = None):
        self.position = np.asarray(position, dtype=float)
        self.steps = steps
        self.flags = flags if flags is not None else []
        self.mirror_position = None if mirror_position is None else np.asarray(mirror_position, dtype=float)
        self.mirror_cost = mirror_cost
        self.pass_estimates = pass_estimates or []

    def step(self, step: SolverStep) -> Optional[StepRecord]:
        """First record of the given step"""
        for record in self.steps:
            if record.step == step:
                return record
        return None

    @property
    def cost(self) -> float:
        return self.steps[-1].cost if self.steps else float('nan')

    @property
    def converged(self) -> bool:
        return all(record.converged for record in self.steps)

    @property
    def iterations(self) -> Dict[str, int]:
        step2 = self.step(SolverStep.CONSTRAINED)
        final = self.steps[-1] if self.steps else None
        return {
            'step2': step2.iterations if step2 else 0,
            'step3': final.iterations if final is not None and final.step == SolverStep.UNCONSTRAINED else 0,
        }

    def error_m(self, truth: np.ndarray) -> float:
        return float(np.linalg.norm(self.position - np.asarray(truth, dtype=float)) * 1e3)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'schema': SCHEMA,
            'position_km': self.position.tolist(),
            'converged': self.converged,
            'cost': self.cost,
            'iterations': self.iterations,
            'flags': list(self.flags),
            'mirror_position_km': None if self.mirror_position is None else self.mirror_position.tolist(),
            'mirror_cost': self.mirror_cost,
            'steps': [record.to_dict() for record in self.steps],
            'passes': [estimate.to_dict() for estimate in self.pass_estimates],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SolverEstimate':
        if data.get('schema') != SCHEMA:
            raise ValidationError(f"Expected solution schema {SCHEMA}, got {data.get('schema')!r}")
        return cls(
            data['position_km'],
            [StepRecord.from_dict(step) for step in data.get('steps', [])],
            data.get('flags', []),
            data.get('mirror_position_km'),
            data.get('mirror_cost'),
            [cls.from_dict(estimate) for estimate in data.get('passes', [])],
        )


def _flag(flags: List[str], name: str):
    if name not in flags:
        flags.append(name)


def jacobian_rows(receiver: np.ndarray, satellite: np.ndarray,
                  satellite_velocity: np.ndarray) -> np.ndarray:
    """Partial derivatives of the range rate with respect to the receiver position"""
    relative = np.asarray(receiver, dtype=float) - np.asarray(satellite, dtype=float)
    distance = np.linalg.norm(relative, axis=-1, keepdims=True)
    if np.any(distance == 0.0):
        raise GeometryError("Receiver coincides with the satellite")
    projection = np.sum(satellite_velocity * relative, axis=-1, keepdims=True)
    return -(satellite_velocity - projection * relative / distance ** 2) / distance


def jacobian_row(receiver: np.ndarray, satellite: np.ndarray,
                 satellite_velocity: np.ndarray) -> np.ndarray:
    """Single-observation form of jacobian_rows"""
    return jacobian_rows(receiver, np.atleast_2d(satellite), np.atleast_2d(satellite_velocity))[0]


class DopplerProblem:
    """Observations and ephemeris bound into residual, Jacobian and cost functions"""

    def __init__(self, observations: ObservationSet, ephemeris,
                 constants: LunarConstants = DEFAULT_CONSTANTS):
        if len(observations) == 0:
            raise ValidationError("No observations to solve with")
        self.observations = observations
        self.ephemeris = ephemeris
        self.constants = constants
        self._weights = 1.0 / (constants.wavelength * observations.sigma_tot)

    def residuals(self, receiver: np.ndarray) -> np.ndarray:
        """Measured minus modelled range rate (km/s)"""
        modelled = adr_rate(receiver, self.observations.t_R, self.ephemeris,
                            constants=self.constants)
        return self.constants.wavelength * self.observations.doppler_hz + modelled

    def jacobian(self, receiver: np.ndarray) -> np.ndarray:
        los = LineOfSight(receiver, self.observations.t_R, self.ephemeris, self.constants)
        return jacobian_rows(receiver, los.satellite, los.satellite_velocity)

    def evaluate(self, receiver: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.residuals(receiver), self.jacobian(receiver)

    def cost_from_residuals(self, residuals: np.ndarray, weighted: bool = False) -> float:
        if weighted:
            residuals = residuals * self._weights
        return 0.5 * float(residuals @ residuals)

    def cost(self, receiver: np.ndarray, weighted: bool = False) -> float:
        return self.cost_from_residuals(self.residuals(receiver), weighted)

    def gradient_from(self, residuals: np.ndarray, jacobian: np.ndarray,
                      weighted: bool = False) -> np.ndarray:
        if weighted:
            residuals = residuals * self._weights ** 2
        return jacobian.T @ residuals

    def gradient(self, receiver: np.ndarray, weighted: bool = False) -> np.ndarray:
        return self.gradient_from(*self.evaluate(receiver), weighted=weighted)


def cost(receiver: np.ndarray, observations: ObservationSet, ephemeris,
         weighted: bool = False, constants: LunarConstants = DEFAULT_CONSTANTS) -> float:
    """Half the sum of squared (optionally sigma-weighted) Doppler residuals"""
    return DopplerProblem(observations, ephemeris, constants).cost(receiver, weighted)


def step1_algebraic(observations: ObservationSet, ephemeris,
                    config: SolverConfig = DEFAULT_SOLVER_CONFIG,
                    constants: LunarConstants = DEFAULT_CONSTANTS,
                    problem: Optional[DopplerProblem] = None) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Surface estimate from the Doppler cone geometry around closest approach"""
    window = observations.middle_slice(config.step1_window)
    if len(window) < 3:
        raise GeometryError(f"Step 1 needs at least 3 observations, got {len(window)}")
    satellites = ephemeris.position(window.t_R)
    velocities = ephemeris.velocity(window.t_R)
    speed = float(np.mean(np.linalg.norm(velocities, axis=1)))
    altitude = float(np.mean(np.linalg.norm(satellites, axis=1))) - constants.moon_radius

    cos_alpha = constants.wavelength * window.doppler_hz / speed
    if np.any(np.abs(cos_alpha) > 1.0):
        logger.warning(f"Clamped {int(np.sum(np.abs(cos_alpha) > 1.0))} cone angle cosine(s) to [-1, 1]")
        cos_alpha = np.clip(cos_alpha, -1.0, 1.0)
    alpha = np.arccos(cos_alpha)
    sin_alpha = np.maximum(np.sin(alpha), 1e-12)

    spread = np.sin(alpha[1:] - alpha[0])
    usable = np.abs(spread) > 1e-9
    if not np.any(usable):
        raise GeometryError("Cone angles do not change over the step 1 window")
    offsets = satellites[1:] - satellites[0]
    scale = sin_alpha[0] * cos_alpha[1:] / np.where(usable, spread, 1.0)
    pca = np.mean((satellites[1:] + offsets * scale[:, None])[usable], axis=0)

    cot_sq = (cos_alpha / sin_alpha) ** 2
    along_sq = np.sum((pca - satellites) ** 2, axis=1)
    if np.sum(cot_sq) > 0:
        perpendicular_sq = float(np.sum(along_sq) / np.sum(cot_sq))
    else:
        perpendicular_sq = altitude ** 2
    cross_track = math.sqrt(max(perpendicular_sq - altitude ** 2, 0.0))

    cross_direction = np.cross(satellites[-1] - satellites[0], pca)
    norm = np.linalg.norm(cross_direction)
    if norm == 0.0:
        raise GeometryError("Satellite track is degenerate over the step 1 window")
    cross_direction /= norm
    pca_norm = np.linalg.norm(pca)
    base = pca * (pca_norm - altitude) / pca_norm

    candidates = []
    for sign in (1.0, -1.0):
        point = base + sign * cross_track * cross_direction
        candidates.append(point / np.linalg.norm(point) * constants.moon_radius)

    problem = problem or DopplerProblem(observations, ephemeris, constants)
    costs = [problem.cost(candidate) for candidate in candidates]
    best = int(np.argmin(costs))
    logger.debug(f"Step 1: cross-track offset {cross_track:.1f} km, costs {costs[0]:.3e}/{costs[1]:.3e}")
    return candidates[best], candidates


def armijo_refine(cost_fn: Callable[[np.ndarray], float], x: np.ndarray, step: np.ndarray,
                  gradient: np.ndarray, cost0: Optional[float] = None,
                  alpha: float = 0.1, epsilon: float = 1.0, beta: float = 0.5,
                  min_epsilon: float = 2.0 ** -60) -> Tuple[np.ndarray, float, bool]:
    """Backtrack the step until it gives sufficient decrease; returns (step, epsilon, underflow)"""
    slope = float(np.dot(gradient, step))
    if cost0 is None:
        cost0 = cost_fn(x)
    while not cost_fn(x + epsilon * step) - cost0 < alpha * epsilon * slope:
        epsilon *= beta
        if epsilon < min_epsilon:
            logger.warning("Armijo backtracking underflowed, keeping the current point")
            return np.zeros_like(step), 0.0, True
    return epsilon * step, epsilon, False


def soft_line_search(phi: Callable[[float], float], dphi: Callable[[float], float],
                     alpha_max: float = 10.0, max_iterations: int = 100,
                     beta: float = 0.99, rho: float = 1e-3) -> float:
    """Step length satisfying the soft descent and curvature conditions"""
    phi0 = phi(0.0)
    dphi0 = dphi(0.0)
    if not dphi0 < 0:
        return 0.0
    gamma = beta * dphi0

    def bound(a: float) -> float:
        return phi0 + rho * a * dphi0

    a, b = 0.0, min(1.0, alpha_max)
    k = 0
    while phi(b) <= bound(b) and dphi(b) <= gamma and b < alpha_max and k < max_iterations:
        k += 1
        a, b = b, min(2.0 * b, alpha_max)

    alpha = b
    phi_a, dphi_a = phi(a), dphi(a)
    while (phi(alpha) > bound(alpha) or dphi(alpha) < gamma) and k < max_iterations:
        k += 1
        width = b - a
        curvature = (phi(b) - phi_a - width * dphi_a) / width ** 2
        if curvature > 0:
            alpha = a - dphi_a / (2.0 * curvature)
            alpha = min(max(alpha, a + 0.1 * width), b - 0.1 * width)
        else:
            alpha = 0.5 * (a + b)
        if phi(alpha) < bound(alpha):
            a = alpha
            phi_a, dphi_a = phi(a), dphi(a)
        else:
            b = alpha

    if not phi(alpha) < phi0:
        return 0.0
    return alpha


def step2_constrained_gn(initial: np.ndarray, problem: DopplerProblem,
                         config: SolverConfig = DEFAULT_SOLVER_CONFIG,
                         flags: Optional[List[str]] = None) -> StepRecord:
    """Gauss-Newton over (x, y) with the receiver held on the lunar sphere"""
    flags = flags if flags is not None else []
    radius = problem.constants.moon_radius
    initial = np.asarray(initial, dtype=float)
    hemisphere = 1.0 if initial[2] >= 0 else -1.0

    def lift(p: np.ndarray) -> Optional[np.ndarray]:
        remainder = radius ** 2 - p @ p
        if remainder <= 0:
            return None
        return np.array([p[0], p[1], hemisphere * math.sqrt(remainder)])

    def surface_cost(p: np.ndarray) -> float:
        point = lift(p)
        return math.inf if point is None else problem.cost(point)

    p = initial[:2] * radius / np.linalg.norm(initial)
    if lift(p) is None:
        p = p * 0.999
        _flag(flags, 'step2_clipped')
        logger.warning("Step 2 start on the equator, pulled inside the sphere")
    position = lift(p)

    converged = False
    iterations = 0
    current = problem.cost(position)
    for iterations in range(1, config.max_iterations + 1):
        residuals, jacobian = problem.evaluate(position)
        current = problem.cost_from_residuals(residuals)
        dz = -p / position[2]
        surface_jacobian = jacobian[:, :2] + np.outer(jacobian[:, 2], dz)
        gradient = surface_jacobian.T @ residuals
        try:
            direction = -np.linalg.solve(surface_jacobian.T @ surface_jacobian, gradient)
        except np.linalg.LinAlgError:
            _flag(flags, 'step2_singular')
            logger.warning("Step 2 normal matrix is singular")
            break

        step, epsilon, underflow = armijo_refine(
            surface_cost, p, direction, gradient, current,
            config.armijo_alpha, config.armijo_epsilon, config.armijo_beta, config.armijo_min_epsilon,
        )
        if underflow:
            _flag(flags, 'step2_armijo_underflow')
            break
        if epsilon < config.armijo_epsilon and lift(p + direction) is None:
            _flag(flags, 'step2_clipped')
        p = p + step
        position = lift(p)
        current = problem.cost(position)
        logger.debug(f"Step 2 iteration {iterations}: |dp| {np.linalg.norm(step) * 1e3:.3f} m, "
                     f"cost {current:.3e}")
        if np.linalg.norm(step) < config.step2_tolerance_km:
            converged = True
            break
    else:
        _flag(flags, 'step2_iteration_cap')
        logger.warning(f"Step 2 hit the {config.max_iterations} iteration cap")

    return StepRecord(SolverStep.CONSTRAINED, position, current, iterations, converged)


def step3_unconstrained_gn(initial: np.ndarray, problem: DopplerProblem,
                           config: SolverConfig = DEFAULT_SOLVER_CONFIG,
                           flags: Optional[List[str]] = None) -> StepRecord:
    """Weighted Gauss-Newton in three dimensions with a soft line search"""
    flags = flags if flags is not None else []
    position = np.asarray(initial, dtype=float).copy()
    row_weights = 1.0 / np.sqrt(problem.observations.sigma_tot)

    converged = False
    iterations = 0
    current = problem.cost(position, weighted=True)
    for iterations in range(1, config.max_iterations + 1):
        residuals, jacobian = problem.evaluate(position)
        weighted_jacobian = jacobian * row_weights[:, None]
        try:
            direction = -np.linalg.solve(weighted_jacobian.T @ weighted_jacobian,
                                         weighted_jacobian.T @ (residuals * row_weights))
        except np.linalg.LinAlgError:
            _flag(flags, 'step3_singular')
            logger.warning("Step 3 normal matrix is singular")
            break

        cache: Dict[float, Tuple[np.ndarray, np.ndarray]] = {0.0: (residuals, jacobian)}

        def trial(a: float) -> Tuple[np.ndarray, np.ndarray]:
            if a not in cache:
                cache[a] = problem.evaluate(position + a * direction)
            return cache[a]

        def phi(a: float) -> float:
            return problem.cost_from_residuals(trial(a)[0], weighted=True)

        def dphi(a: float) -> float:
            return float(direction @ problem.gradient_from(*trial(a), weighted=True))

        alpha = soft_line_search(phi, dphi, config.line_search_alpha_max,
                                 config.line_search_max_iterations,
                                 config.line_search_beta, config.line_search_rho)
        step = alpha * direction
        position = position + step
        current = phi(alpha)
        logger.debug(f"Step 3 iteration {iterations}: alpha {alpha:.3f}, "
                     f"|dr| {np.linalg.norm(step) * 1e3:.4f} m, cost {current:.3e}")
        if alpha == 0.0:
            _flag(flags, 'step3_zero_step')
        if np.linalg.norm(step) < config.step3_tolerance_km:
            converged = True
            break
    else:
        _flag(flags, 'step3_iteration_cap')
        logger.warning(f"Step 3 hit the {config.max_iterations} iteration cap")

    return StepRecord(SolverStep.UNCONSTRAINED, position, current, iterations, converged)


def subtrack_plane_normal(satellite_positions: np.ndarray) -> np.ndarray:
    """Unit normal of the plane through the Moon's centre best fitting a ground track"""
    positions = np.asarray(satellite_positions, dtype=float)
    if len(positions) < 2:
        raise GeometryError("Need at least two satellite positions for a ground-track plane")
    _, singular, vt = np.linalg.svd(positions, full_matrices=True)
    if len(singular) < 2 or singular[1] <= 1e-9 * singular[0]:
        raise GeometryError("Satellite positions are collinear with the Moon's centre")
    normal = vt[-1]
    reference = np.cross(positions[0], positions[-1])
    if normal @ reference < 0:
        normal = -normal
    return normal


def mirror_reflect(receiver: np.ndarray, normal: np.ndarray) -> np.ndarray:
    """Reflection of a position through the ground-track plane, keeping its radius"""
    receiver = np.asarray(receiver, dtype=float)
    normal = unit_vectors(normal)
    reflected = receiver - 2.0 * (receiver @ normal) * normal
    return reflected * np.linalg.norm(receiver) / np.linalg.norm(reflected)


def locate_single_pass(observations: ObservationSet, ephemeris,
                       config: SolverConfig = DEFAULT_SOLVER_CONFIG,
                       constants: LunarConstants = DEFAULT_CONSTANTS) -> SolverEstimate:
    """Steps 1-3 on one pass, then keep the lower-cost side of the ground track"""
    problem = DopplerProblem(observations, ephemeris, constants)
    flags: List[str] = []

    with perf_monitor.timed('step1'):
        initial, _ = step1_algebraic(observations, ephemeris, config, constants, problem)
    first = StepRecord(SolverStep.ALGEBRAIC, initial, problem.cost(initial))
    with perf_monitor.timed('step2'):
        second = step2_constrained_gn(initial, problem, config, flags)
    with perf_monitor.timed('step3'):
        third = step3_unconstrained_gn(second.position, problem, config, flags)

    normal = subtrack_plane_normal(ephemeris.position(observations.t_R))
    mirror = mirror_reflect(third.position, normal)
    mirror_iterations, mirror_converged = 0, True
    if config.refine_mirror:
        mirror_flags: List[str] = []
        with perf_monitor.timed('step3'):
            refined = step3_unconstrained_gn(mirror, problem, config, mirror_flags)
        mirror, mirror_iterations, mirror_converged = refined.position, refined.iterations, refined.converged
    mirror_cost = problem.cost(mirror, weighted=True)

    steps = [first, second, third]
    position = third.position
    if mirror_cost < third.cost:
        logger.info(f"Mirror solution has lower cost ({mirror_cost:.3e} < {third.cost:.3e}), selecting it")
        _flag(flags, 'mirror_selected')
        position, mirror, mirror_cost = mirror, third.position, third.cost
        # iterations spent refining the reflection, zero when it is used as is
        steps.append(StepRecord(SolverStep.UNCONSTRAINED, position, problem.cost(position, weighted=True),
                                mirror_iterations, mirror_converged))

    logger.info(f"Pass solved: {third.iterations} step 3 iterations, cost {min(mirror_cost, third.cost):.3e}")
    return SolverEstimate(position, steps, flags, mirror, mirror_cost)


def disambiguate_multipass(observations: ObservationSet, ephemeris,
                           config: SolverConfig = DEFAULT_SOLVER_CONFIG,
                           constants: LunarConstants = DEFAULT_CONSTANTS) -> SolverEstimate:
    """Pick the per-pass solutions that agree across passes, then solve jointly"""
    pass_ids = observations.pass_ids()
    if len(pass_ids) < 2:
        return locate_single_pass(observations, ephemeris, config, constants)

    per_pass = [locate_single_pass(observations.for_pass(pid), ephemeris, config, constants)
                for pid in pass_ids]

    hypotheses = []
    for anchor in (per_pass[0].position, per_pass[0].mirror_position):
        members = [anchor]
        for estimate in per_pass[1:]:
            options = [estimate.position, estimate.mirror_position]
            distances = [np.linalg.norm(option - anchor) for option in options]
            members.append(options[int(np.argmin(distances))])
        members = np.array(members)
        centre = members.mean(axis=0)
        spread = float(np.mean(np.linalg.norm(members - centre, axis=1)))
        hypotheses.append((spread, centre))

    problem = DopplerProblem(observations, ephemeris, constants)
    flags: List[str] = []
    (spread_a, centre_a), (spread_b, centre_b) = hypotheses
    logger.debug(f"Mirror clustering spreads: {spread_a:.3f} km vs {spread_b:.3f} km")

    if abs(spread_a - spread_b) < config.ambiguity_tolerance_km:
        _flag(flags, 'mirror_ambiguous')
        logger.warning("Mirror clusters are not separable, falling back to joint cost comparison")
        with perf_monitor.timed('step3'):
            candidates = [step3_unconstrained_gn(centre, problem, config, flags)
                          for centre in (centre_a, centre_b)]
        order = sorted(range(2), key=lambda i: candidates[i].cost)
        final = candidates[order[0]]
        mirror_position = candidates[order[1]].position
        mirror_cost = candidates[order[1]].cost
    else:
        chosen, rejected = (centre_a, centre_b) if spread_a < spread_b else (centre_b, centre_a)
        with perf_monitor.timed('step3'):
            final = step3_unconstrained_gn(chosen, problem, config, flags)
        mirror_position = rejected
        mirror_cost = problem.cost(rejected, weighted=True)

    steps = list(per_pass[0].steps[:3]) + [final]
    for estimate in per_pass:
        for flag in estimate.flags:
            if flag.endswith('iteration_cap'):
                _flag(flags, flag)
    logger.info(f"Joint solution over {len(pass_ids)} passes: {final.iterations} iterations")
    return SolverEstimate(final.position, steps, flags, mirror_position, mirror_cost, per_pass)


def locate(observations: ObservationSet, ephemeris,
           config: SolverConfig = DEFAULT_SOLVER_CONFIG,
           constants: LunarConstants = DEFAULT_CONSTANTS) -> SolverEstimate:
    """Estimate the receiver position from one or more passes"""
    if len(observations.pass_ids()) > 1:
        return disambiguate_multipass(observations, ephemeris, config, constants)
    return locate_single_pass(observations, ephemeris, config, constants)
