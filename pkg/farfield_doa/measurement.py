# measurement.py

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from typing_extensions import Literal

from farfield_doa.errors import CoincidentPositionError, PreconditionError
from farfield_doa.scenario import (
    NoiseModel,
    PairingScheme,
    Scenario,
    centered_positions,
    true_direction,
)

logger = logging.getLogger(__name__)

MeasurementKind = Literal["fdoa", "tdoa", "stacked"]
ModelKind = Literal["exact", "far_field"]

MEASUREMENT_KINDS = ("fdoa", "tdoa")
MODELS = ("exact", "far_field")
UNIT_TOLERANCE = 1e-12

Seed = Union[int, np.random.SeedSequence]


@dataclass(frozen=True, eq=False)
class DifferencingMatrix:
    """P: row p has -1 in column i and +1 in column j for pair (i, j), so P d = d_j - d_i."""

    entries: np.ndarray
    pairs: Tuple[Tuple[int, int], ...]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True, eq=False)
class ShiftVector:
    """Per-receiver quantity: Doppler shift d_i or time of arrival tau_i."""

    values: np.ndarray


@dataclass(frozen=True, eq=False)
class MeasurementVector:
    kind: MeasurementKind
    values: np.ndarray
    pairs: Tuple[Tuple[int, int], ...]
    model: ModelKind = "exact"
    unit_mode: str = "scaled"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) != len(self.pairs):
            raise PreconditionError(
                f"measurement vector has {values.size} values for {len(self.pairs)} pairs")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs))

    def __len__(self) -> int:
        return len(self.values)

    def with_values(self, values: np.ndarray) -> "MeasurementVector":
        return replace(self, values=values)


def build_differencing_matrix(pairing: Union[PairingScheme, Sequence[Tuple[int, int]]],
                              n_receivers: int) -> DifferencingMatrix:
    pairs = pairing.pairs_for(n_receivers) if isinstance(pairing, PairingScheme) else list(pairing)
    entries = np.zeros((len(pairs), n_receivers))
    for row, (i, j) in enumerate(pairs):
        if not (0 <= i < n_receivers and 0 <= j < n_receivers) or i == j:
            raise PreconditionError(f"invalid pair ({i + 1}, {j + 1}) for {n_receivers} receivers")
        entries[row, i] = -1.0
        entries[row, j] = 1.0
    return DifferencingMatrix(entries, tuple(pairs))


def _differencing_for_pairs(pairs: Sequence[Tuple[int, int]]) -> DifferencingMatrix:
    n_receivers = max(max(i, j) for i, j in pairs) + 1
    return build_differencing_matrix(pairs, n_receivers)


def ranges_to_emitter(scenario: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    """Line-of-sight vectors x_i - x and their norms r_i."""
    emitter = scenario.require_emitter()
    offsets = scenario.positions - np.asarray(emitter.position)
    ranges = np.linalg.norm(offsets, axis=1)
    for k, r in enumerate(ranges):
        if r == 0.0:
            raise CoincidentPositionError(k)
    return offsets, ranges


def exact_frequency_shifts(scenario: Scenario) -> ShiftVector:
    """d_i = v_i . (x_i - x)/||x_i - x||, times f0/c in physical mode."""
    offsets, ranges = ranges_to_emitter(scenario)
    radial = np.einsum("ij,ij->i", scenario.velocities, offsets) / ranges
    return ShiftVector(radial * scenario.units.fdoa_factor)


def _require_unit(direction: np.ndarray) -> np.ndarray:
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > UNIT_TOLERANCE:
        raise PreconditionError(f"direction must be a unit vector, norm is {np.linalg.norm(direction)!r}")
    return direction


def farfield_frequency_shifts(direction: np.ndarray, V: np.ndarray) -> ShiftVector:
    """d = -V x_hat."""
    direction = _require_unit(direction)
    return ShiftVector(-np.asarray(V, dtype=float) @ direction)


def exact_toa(scenario: Scenario) -> ShiftVector:
    _, ranges = ranges_to_emitter(scenario)
    return ShiftVector(ranges * scenario.units.tdoa_factor)


def farfield_toa(direction: np.ndarray, X: np.ndarray) -> ShiftVector:
    """tau_i = -x_i . x_hat, with the common ||x|| term dropped (P cancels it)."""
    direction = _require_unit(direction)
    return ShiftVector(-np.asarray(X, dtype=float) @ direction)


def measure(scenario: Scenario, kind: str, model: str) -> MeasurementVector:
    if kind not in MEASUREMENT_KINDS:
        raise PreconditionError(f"unknown measurement kind '{kind}'")
    if model not in MODELS:
        raise PreconditionError(f"unknown measurement model '{model}'")

    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    units = scenario.units
    if model == "exact":
        shifts = exact_frequency_shifts(scenario) if kind == "fdoa" else exact_toa(scenario)
        values = shifts.values
    else:
        direction = true_direction(scenario)
        if kind == "fdoa":
            values = farfield_frequency_shifts(direction, scenario.velocities).values * units.fdoa_factor
        else:
            values = farfield_toa(direction, centered_positions(scenario)).values * units.tdoa_factor

    return MeasurementVector(kind=kind, values=P.entries @ values, pairs=P.pairs,
                             model=model, unit_mode=units.mode)


def stack_measurements(fdoa: MeasurementVector, tdoa: MeasurementVector) -> MeasurementVector:
    """Row-concatenate an FDOA block over a TDOA block, matching a stacked system."""
    if fdoa.kind != "fdoa" or tdoa.kind != "tdoa":
        raise PreconditionError("stacking needs one FDOA and one TDOA measurement vector")
    return MeasurementVector(kind="stacked", values=np.concatenate([fdoa.values, tdoa.values]),
                             pairs=fdoa.pairs + tdoa.pairs, model=fdoa.model, unit_mode=fdoa.unit_mode)


def noise_factor(noise: NoiseModel, P: DifferencingMatrix) -> np.ndarray:
    """Square-root factor L (M x K) with L L^T = Q for the noise model."""
    n_pairs, n_receivers = P.shape
    if noise.kind == "none":
        return np.zeros((n_pairs, 0))
    if noise.kind == "iid":
        return noise.sigma * np.eye(n_pairs)
    if noise.kind == "differenced":
        # per-receiver noise pushed through P; valid even when P P^T is singular
        return noise.sigma * P.entries
    if noise.kind == "explicit":
        Q = noise.covariance_matrix
        if Q is None or Q.shape != (n_pairs, n_pairs):
            shape = None if Q is None else Q.shape
            raise PreconditionError(f"explicit Q has shape {shape}, expected {(n_pairs, n_pairs)}")
        return scipy.linalg.cholesky(Q, lower=True)
    raise PreconditionError(f"unknown noise kind '{noise.kind}'")


def noise_covariance(noise: NoiseModel, P: DifferencingMatrix) -> np.ndarray:
    if noise.kind == "explicit":
        noise_factor(noise, P)
        return noise.covariance_matrix
    L = noise_factor(noise, P)
    return L @ L.T


def block_sigma(noise: NoiseModel, P: DifferencingMatrix) -> Optional[float]:
    """Per-measurement sigma of a block, sqrt(mean diag Q); None without noise."""
    if noise.kind == "none":
        return None
    return math.sqrt(float(np.mean(np.diag(noise_covariance(noise, P)))))


def make_generator(seed: Seed) -> np.random.Generator:
    """Counter-based Philox stream so draws do not depend on thread count or platform."""
    sequence = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(sequence))


def add_noise(m: MeasurementVector, noise: NoiseModel,
              seed: Optional[Seed] = None) -> Tuple[MeasurementVector, np.ndarray]:
    """Return m + delta_f with delta_f ~ N(0, Q), and the Q used. Seed defaults to noise.seed."""
    if m.kind == "stacked":
        raise PreconditionError("add noise to the FDOA and TDOA blocks separately, then stack them")
    P = _differencing_for_pairs(m.pairs)
    L = noise_factor(noise, P)
    Q = noise_covariance(noise, P)
    if L.shape[1] == 0:
        return m, Q
    rng = make_generator(noise.seed if seed is None else seed)
    delta = L @ rng.standard_normal(L.shape[1])
    return m.with_values(m.values + delta), Q


def feasible_locus(A: np.ndarray, samples: int) -> np.ndarray:
    """Image of the unit circle under a 2-column far-field map A, one row per sample."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != 2:
        raise PreconditionError("the feasible locus is only defined for D = 2")
    if samples < 3:
        raise PreconditionError(f"need at least 3 samples, got {samples}")
    theta = 2.0 * np.pi * np.arange(samples) / samples
    circle = np.column_stack([np.cos(theta), np.sin(theta)])
    return circle @ A.T


def locus_axes(A: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Ellipse axes of the locus: left singular vectors U and singular values s of A."""
    U, s, _ = scipy.linalg.svd(np.asarray(A, dtype=float), full_matrices=False)
    return U, s


def fdoa_ellipse_locus(V: np.ndarray, pairing: PairingScheme, samples: int) -> List[np.ndarray]:
    V = np.asarray(V, dtype=float)
    P = build_differencing_matrix(pairing, V.shape[0])
    return list(feasible_locus(-P.entries @ V, samples))


def tdoa_ellipse_locus(X: np.ndarray, pairing: PairingScheme, samples: int) -> List[np.ndarray]:
    X = np.asarray(X, dtype=float)
    P = build_differencing_matrix(pairing, X.shape[0])
    return list(feasible_locus(-P.entries @ (X - X.mean(axis=0)), samples))


def noise_at_power(noise: NoiseModel, noise_power: float) -> NoiseModel:
    """Noise model of the same shape with sigma^2 = noise_power; explicit Q is scaled by noise_power.

    A scenario without noise is swept with differenced noise.
    """
    if noise.kind == "explicit":
        Q = noise.covariance_matrix * noise_power
        return replace(noise, covariance=tuple(map(tuple, Q)))
    kind = "differenced" if noise.kind == "none" else noise.kind
    return replace(noise, kind=kind, sigma=float(np.sqrt(noise_power)))
