# crlb.py

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from farfield_doa.csv_files import write_frame
from farfield_doa.errors import AoaUnobservableError, PreconditionError
from farfield_doa.measurement import (
    build_differencing_matrix,
    noise_at_power,
    noise_covariance,
    ranges_to_emitter,
)
from farfield_doa.scenario import COVARIANCE_RTOL, Scenario, emitter_offset

logger = logging.getLogger(__name__)

UNOBSERVABLE_FISHER = 1e-300
# Differencing cancellation budget, in units of machine epsilon
CANCELLATION_ULPS = 64.0


@dataclass(frozen=True, eq=False)
class CrlbReport:
    fisher_information: float
    crlb_aoa_variance: float
    Q_used: np.ndarray
    jacobian_f_x: np.ndarray
    dx_dtheta: np.ndarray


def _line_of_sight(scenario: Scenario):
    offsets, ranges = ranges_to_emitter(scenario)
    return offsets / ranges[:, None], ranges


def frequency_shift_gradients(scenario: Scenario) -> np.ndarray:
    """N x D rows dd_i/dx = v_i^T (-I + u_i u_i^T) / r_i with u_i = (x_i - x)/r_i."""
    u, r = _line_of_sight(scenario)
    V = scenario.velocities
    radial = np.einsum("ij,ij->i", V, u)
    gradients = (-V + radial[:, None] * u) / r[:, None]
    return gradients * scenario.units.fdoa_factor


def arrival_time_gradients(scenario: Scenario) -> np.ndarray:
    """N x D rows dtau_i/dx = -u_i^T."""
    u, _ = _line_of_sight(scenario)
    return -u * scenario.units.tdoa_factor


def fdoa_jacobian(scenario: Scenario) -> np.ndarray:
    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    return P.entries @ frequency_shift_gradients(scenario)


def tdoa_jacobian(scenario: Scenario) -> np.ndarray:
    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    return P.entries @ arrival_time_gradients(scenario)


def dx_dtheta(range_: float, theta: float) -> np.ndarray:
    """Derivative of x(theta) = range (cos theta, sin theta)."""
    if not range_ > 0:
        raise PreconditionError(f"range must be > 0, got {range_}")
    return range_ * np.array([-math.sin(theta), math.cos(theta)])


def _fisher_quadratic(g: np.ndarray, Q: np.ndarray) -> float:
    """g^T Q^-1 g through a Cholesky solve; pseudo-inverse when Q is singular."""
    eigenvalues = scipy.linalg.eigvalsh(Q)
    if eigenvalues[0] <= COVARIANCE_RTOL * eigenvalues[-1]:
        logger.warning("Noise covariance is singular; using its pseudo-inverse for the Fisher information")
        return float(g @ scipy.linalg.pinvh(Q) @ g)
    factor = scipy.linalg.cho_factor(Q, lower=True)
    return float(g @ scipy.linalg.cho_solve(factor, g))


def _default_covariance(scenario: Scenario) -> np.ndarray:
    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    return noise_covariance(scenario.noise, P)


def _aoa_crlb(scenario: Scenario, Q: Optional[np.ndarray], gradients: np.ndarray) -> CrlbReport:
    if scenario.dim != 2:
        raise PreconditionError(f"AOA CRLB is defined for D = 2 only, scenario has D = {scenario.dim}")
    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    jacobian = P.entries @ gradients
    Q = _default_covariance(scenario) if Q is None else np.asarray(Q, dtype=float)
    n_rows = jacobian.shape[0]
    if Q.shape != (n_rows, n_rows):
        raise PreconditionError(f"Q has shape {Q.shape}, expected {(n_rows, n_rows)}")
    if not np.any(Q):
        raise PreconditionError("noise covariance is zero; the CRLB needs a positive definite Q")

    offset = emitter_offset(scenario)
    theta = math.atan2(offset[1], offset[0])
    derivative = dx_dtheta(float(np.linalg.norm(offset)), theta)
    g = jacobian @ derivative
    # a g this small is rounding left over from differencing equal gradients
    floor = (CANCELLATION_ULPS * np.finfo(float).eps * np.linalg.norm(P.entries)
             * np.linalg.norm(gradients) * np.linalg.norm(derivative))
    fisher = _fisher_quadratic(g, Q)
    if fisher <= UNOBSERVABLE_FISHER or np.linalg.norm(g) <= floor:
        raise AoaUnobservableError(f"AOA unobservable at this geometry (Fisher information {fisher:.3e})")
    return CrlbReport(fisher, 1.0 / fisher, Q, jacobian, derivative)


def aoa_crlb(scenario: Scenario, Q: Optional[np.ndarray] = None) -> CrlbReport:
    """CRLB on FDOA-based AOA. Q defaults to the scenario's noise covariance."""
    return _aoa_crlb(scenario, Q, frequency_shift_gradients(scenario))


def tdoa_aoa_crlb(scenario: Scenario, Q: Optional[np.ndarray] = None) -> CrlbReport:
    return _aoa_crlb(scenario, Q, arrival_time_gradients(scenario))


def crlb_sweep(scenario: Scenario, noise_powers: Sequence[float], kind: str = "fdoa") -> np.ndarray:
    """CRLB on AOA variance at each noise power, using the scenario's noise shape."""
    compute = {"fdoa": aoa_crlb, "tdoa": tdoa_aoa_crlb}.get(kind)
    if compute is None:
        raise PreconditionError(f"CRLB sweeps support fdoa and tdoa, not '{kind}'")
    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    bounds = []
    for power in noise_powers:
        Q = noise_covariance(noise_at_power(scenario.noise, power), P)
        bounds.append(compute(scenario, Q).crlb_aoa_variance)
    return np.array(bounds)


def write_crlb_sweep(noise_powers: Sequence[float], bounds: Sequence[float], path: Optional[Path]):
    frame = pd.DataFrame({"noise_power": np.asarray(noise_powers, dtype=float),
                          "crlb_var_rad2": np.asarray(bounds, dtype=float)})
    write_frame(frame, path)
