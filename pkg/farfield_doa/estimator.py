# estimator.py

import logging
import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg

from farfield_doa.errors import (
    DegenerateSolutionError,
    PreconditionError,
    UnobservableDirectionError,
    UnresolvableGeometryError,
)
from farfield_doa.measurement import MeasurementVector, build_differencing_matrix
from farfield_doa.scenario import Scenario, centered_positions

logger = logging.getLogger(__name__)

SYSTEM_KINDS = ("fdoa", "tdoa", "stacked")
DEGENERATE_RTOL = 1e-14
PARALLEL_TOLERANCE = 1e-10
POLE_TOLERANCE = 1e-15

Angles = Union[float, Tuple[float, float]]


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    """Far-field measurement map A with m = A x_hat: -PV (FDOA), -PX (TDOA) or both stacked."""

    matrix: np.ndarray
    kind: str
    rank: int
    singular_values: np.ndarray
    row_weights: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    @property
    def weighted_matrix(self) -> np.ndarray:
        return self.row_weights[:, None] * self.matrix

    @property
    def condition_number(self) -> float:
        s = self.singular_values
        if len(s) == 0 or s[-1] == 0.0:
            return math.inf
        return float(s[0] / s[-1])


@dataclass(frozen=True, eq=False)
class DoaEstimate:
    kind: str
    direction: np.ndarray
    raw_solution: np.ndarray
    residual_norm: float
    fitted_measurements: np.ndarray
    aoa: Angles
    condition_number: float

    @property
    def raw_norm(self) -> float:
        """||raw_solution||; close to 1 when the far-field model holds."""
        return float(np.linalg.norm(self.raw_solution))


@dataclass(frozen=True, eq=False)
class TriangulationResult:
    position: np.ndarray
    residual: float
    inconsistent_fixes: Tuple[int, ...] = ()


def _numerical_rank(singular_values: np.ndarray, shape: Tuple[int, int]) -> int:
    if len(singular_values) == 0 or singular_values[0] == 0.0:
        return 0
    tolerance = singular_values[0] * max(shape) * np.finfo(float).eps
    return int(np.sum(singular_values > tolerance))


def system_from_matrix(matrix: np.ndarray, kind: str, row_weights: Optional[np.ndarray] = None) -> SystemMatrix:
    matrix = np.asarray(matrix, dtype=float)
    weights = np.ones(matrix.shape[0]) if row_weights is None else np.asarray(row_weights, dtype=float)
    s = scipy.linalg.svdvals(weights[:, None] * matrix) if matrix.size else np.zeros(0)
    return SystemMatrix(matrix, kind, _numerical_rank(s, matrix.shape), s, weights)


def fdoa_system_matrix(scenario: Scenario) -> np.ndarray:
    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    return -P.entries @ scenario.velocities * scenario.units.fdoa_factor


def tdoa_system_matrix(scenario: Scenario) -> np.ndarray:
    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    return -P.entries @ centered_positions(scenario) * scenario.units.tdoa_factor


def _block_weight(block: np.ndarray, sigma: Optional[float]) -> float:
    if sigma is not None and sigma > 0:
        return 1.0 / sigma
    s_max = scipy.linalg.svdvals(block)[0] if block.size else 0.0
    return 1.0 / s_max if s_max > 0 else 1.0


def build_system(scenario: Scenario, kind: str,
                 block_sigmas: Optional[Mapping[str, float]] = None) -> SystemMatrix:
    """Stacked systems weight each block by 1/sigma from block_sigmas, else by 1/largest singular value."""
    if kind == "fdoa":
        return system_from_matrix(fdoa_system_matrix(scenario), kind)
    if kind == "tdoa":
        return system_from_matrix(tdoa_system_matrix(scenario), kind)
    if kind != "stacked":
        raise PreconditionError(f"unknown system kind '{kind}'")

    block_sigmas = block_sigmas or {}
    blocks = {"fdoa": fdoa_system_matrix(scenario), "tdoa": tdoa_system_matrix(scenario)}
    weights = np.concatenate([
        np.full(len(block), _block_weight(block, block_sigmas.get(name)))
        for name, block in blocks.items()
    ])
    return system_from_matrix(np.vstack(list(blocks.values())), kind, weights)


def solve_least_squares(A: np.ndarray, m: np.ndarray) -> np.ndarray:
    """min ||A z - m||_2 via Householder QR; A must have full column rank."""
    Q, R = scipy.linalg.qr(A, mode="economic")
    return scipy.linalg.solve_triangular(R, Q.T @ m, lower=False)


def solve_normal_equations(A: np.ndarray, m: np.ndarray) -> np.ndarray:
    """The literal pseudo-inverse form (A^T A)^-1 A^T m."""
    return np.linalg.solve(A.T @ A, A.T @ m)


def aoa_from_direction(direction: np.ndarray) -> Angles:
    """theta in (-pi, pi] for 2D; (azimuth, elevation) for 3D, azimuth 0 at the poles."""
    u = np.asarray(direction, dtype=float)
    if len(u) == 2:
        theta = math.atan2(u[1], u[0])
        return math.pi if theta == -math.pi else theta
    if len(u) == 3:
        if math.hypot(u[0], u[1]) < POLE_TOLERANCE:
            azimuth = 0.0
        else:
            azimuth = math.atan2(u[1], u[0])
            azimuth = math.pi if azimuth == -math.pi else azimuth
        return azimuth, math.asin(max(-1.0, min(1.0, u[2])))
    raise PreconditionError(f"direction must have 2 or 3 components, got {len(u)}")


def estimate_doa(system: SystemMatrix, measurements: MeasurementVector,
                 covariance: Optional[np.ndarray] = None) -> DoaEstimate:
    """Least-squares DOA from far-field measurements; optional covariance prewhitens the rows."""
    if measurements.kind != system.kind:
        raise PreconditionError(
            f"measurement kind '{measurements.kind}' does not match system kind '{system.kind}'")
    A = system.matrix
    n_rows, dim = A.shape
    if len(measurements) != n_rows:
        raise PreconditionError(f"{len(measurements)} measurements for a system with {n_rows} rows")
    if n_rows < dim:
        raise PreconditionError(f"underdetermined system: {n_rows} measurements for {dim} direction components")
    if system.rank < dim:
        null_space = scipy.linalg.null_space(system.weighted_matrix)
        raise UnobservableDirectionError(system.rank, dim, null_space)

    m = measurements.values
    if covariance is not None:
        L = scipy.linalg.cholesky(np.asarray(covariance, dtype=float), lower=True)
        A_solve = scipy.linalg.solve_triangular(L, A, lower=True)
        m_solve = scipy.linalg.solve_triangular(L, m, lower=True)
    else:
        A_solve = system.weighted_matrix
        m_solve = system.row_weights * m

    raw = solve_least_squares(A_solve, m_solve)
    raw_norm = np.linalg.norm(raw)
    A_norm = scipy.linalg.norm(A_solve, 2)
    if raw_norm <= DEGENERATE_RTOL * np.linalg.norm(m_solve) / A_norm:
        raise DegenerateSolutionError(
            f"degenerate solution: ||raw solution|| = {raw_norm:.3e} for ||m|| = {np.linalg.norm(m):.3e}")

    fitted = A @ raw
    direction = raw / raw_norm
    return DoaEstimate(
        kind=system.kind,
        direction=direction,
        raw_solution=raw,
        residual_norm=float(np.linalg.norm(m - fitted)),
        fitted_measurements=fitted,
        aoa=aoa_from_direction(direction),
        condition_number=system.condition_number,
    )


def denoise_measurements(measurements: MeasurementVector, system: SystemMatrix) -> MeasurementVector:
    """Project the measurements onto range(A): the fitted values of the DOA solve."""
    estimate = estimate_doa(system, measurements)
    return measurements.with_values(estimate.fitted_measurements)


def triangulate(fixes: Sequence[Tuple[np.ndarray, np.ndarray]],
                weights: Optional[Sequence[float]] = None) -> TriangulationResult:
    """Point minimizing the weighted squared perpendicular distances to the bearing lines."""
    if len(fixes) < 2:
        raise PreconditionError(f"need >= 2 fixes, got {len(fixes)}")
    centers = np.array([np.asarray(c, dtype=float) for c, _ in fixes])
    directions = np.array([np.asarray(u, dtype=float) for _, u in fixes])
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    w = np.ones(len(fixes)) if weights is None else np.asarray(weights, dtype=float)
    if len(w) != len(fixes) or np.any(w <= 0):
        raise PreconditionError("weights must be positive, one per fix")

    dim = centers.shape[1]
    projectors = np.eye(dim)[None, :, :] - directions[:, :, None] * directions[:, None, :]
    H = np.einsum("k,kab->ab", w, projectors)
    b = np.einsum("k,kab,kb->a", w, projectors, centers)
    if scipy.linalg.eigvalsh(H)[0] <= PARALLEL_TOLERANCE * w.sum():
        raise UnresolvableGeometryError("unresolvable geometry: all bearing lines are parallel")

    position = scipy.linalg.solve(H, b, assume_a="pos")
    perpendicular = np.einsum("kab,kb->ka", projectors, position - centers)
    residual = math.sqrt(float(np.sum(w * np.sum(perpendicular ** 2, axis=1))))

    along = np.einsum("ka,ka->k", directions, position - centers)
    inconsistent: List[int] = [k for k in range(len(fixes)) if along[k] < 0]
    for k in inconsistent:
        logger.warning(f"Fix {k + 1} points away from the triangulated position")
    return TriangulationResult(position, residual, tuple(inconsistent))
