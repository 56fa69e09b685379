# scenario.py

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from typing_extensions import Literal

from farfield_doa.diagnostics import Diagnostic, DiagnosticReport
from farfield_doa.errors import PreconditionError, ScenarioValidationError

logger = logging.getLogger(__name__)

PairingKind = Literal["reference", "all_pairs", "explicit"]
NoiseKind = Literal["none", "iid", "differenced", "explicit"]
UnitMode = Literal["scaled", "physical"]

PAIRING_KINDS = ("reference", "all_pairs", "explicit")
NOISE_KINDS = ("none", "iid", "differenced", "explicit")
UNIT_MODES = ("scaled", "physical")

FAR_FIELD_WARNING_THRESHOLD = 0.1
COVARIANCE_RTOL = 1e-12
MAX_SEED = 2 ** 64

Vector = Tuple[float, ...]


def _as_vector(values: Sequence[float]) -> Vector:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class Receiver:
    position: Vector
    velocity: Vector

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vector(self.position))
        object.__setattr__(self, "velocity", _as_vector(self.velocity))


@dataclass(frozen=True)
class Emitter:
    position: Vector

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vector(self.position))


@dataclass(frozen=True)
class PairingScheme:
    """Which receiver pairs (i, j) form the rows of P. Indices are 0-based."""

    kind: PairingKind = "reference"
    ref_index: int = 0
    pairs: Tuple[Tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(i), int(j)) for i, j in self.pairs))

    @classmethod
    def reference(cls, ref_index: int = 0) -> "PairingScheme":
        return cls("reference", ref_index=ref_index)

    @classmethod
    def all_pairs(cls) -> "PairingScheme":
        return cls("all_pairs")

    @classmethod
    def explicit(cls, pairs: Sequence[Tuple[int, int]]) -> "PairingScheme":
        return cls("explicit", pairs=tuple(pairs))

    def pairs_for(self, n_receivers: int) -> List[Tuple[int, int]]:
        if self.kind == "reference":
            return [(self.ref_index, k) for k in range(n_receivers) if k != self.ref_index]
        if self.kind == "all_pairs":
            return [(i, j) for i in range(n_receivers) for j in range(i + 1, n_receivers)]
        if self.kind == "explicit":
            return list(self.pairs)
        raise PreconditionError(f"unknown pairing kind '{self.kind}'")


@dataclass(frozen=True)
class NoiseModel:
    kind: NoiseKind = "none"
    sigma: float = 0.0
    covariance: Optional[Tuple[Tuple[float, ...], ...]] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.covariance is not None:
            object.__setattr__(self, "covariance",
                               tuple(tuple(float(v) for v in row) for row in self.covariance))

    @property
    def covariance_matrix(self) -> Optional[np.ndarray]:
        if self.covariance is None:
            return None
        return np.array(self.covariance, dtype=float)


@dataclass(frozen=True)
class UnitConvention:
    mode: UnitMode = "scaled"
    f0: Optional[float] = None
    c: Optional[float] = None

    @property
    def fdoa_factor(self) -> float:
        """f0/c in physical mode, 1 when scaled."""
        if self.mode == "physical":
            return self.f0 / self.c
        return 1.0

    @property
    def tdoa_factor(self) -> float:
        if self.mode == "physical":
            return 1.0 / self.c
        return 1.0


@dataclass(frozen=True)
class Scenario:
    dim: int
    receivers: Tuple[Receiver, ...]
    emitter: Optional[Emitter] = None
    pairing: PairingScheme = field(default_factory=PairingScheme)
    noise: NoiseModel = field(default_factory=NoiseModel)
    units: UnitConvention = field(default_factory=UnitConvention)

    def __post_init__(self):
        object.__setattr__(self, "receivers", tuple(self.receivers))

    @classmethod
    def from_arrays(cls, positions, velocities, emitter=None, pairing: Optional[PairingScheme] = None,
                    noise: Optional[NoiseModel] = None, units: Optional[UnitConvention] = None) -> "Scenario":
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        velocities = np.atleast_2d(np.asarray(velocities, dtype=float))
        receivers = tuple(Receiver(p, v) for p, v in zip(positions, velocities))
        return cls(
            dim=positions.shape[1],
            receivers=receivers,
            emitter=Emitter(emitter) if emitter is not None else None,
            pairing=pairing or PairingScheme(),
            noise=noise or NoiseModel(),
            units=units or UnitConvention(),
        )

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    @property
    def positions(self) -> np.ndarray:
        """N x D matrix X of receiver positions."""
        return np.array([r.position for r in self.receivers], dtype=float)

    @property
    def velocities(self) -> np.ndarray:
        """N x D matrix V of receiver velocities."""
        return np.array([r.velocity for r in self.receivers], dtype=float)

    @property
    def pairs(self) -> List[Tuple[int, int]]:
        return self.pairing.pairs_for(self.n_receivers)

    def require_emitter(self) -> Emitter:
        if self.emitter is None:
            raise PreconditionError("scenario has no emitter: field 'emitter' is required for this operation")
        return self.emitter


def receiver_centroid(scenario: Scenario) -> np.ndarray:
    return scenario.positions.mean(axis=0)


def centered_positions(scenario: Scenario) -> np.ndarray:
    return scenario.positions - receiver_centroid(scenario)


def emitter_offset(scenario: Scenario) -> np.ndarray:
    """Emitter position relative to the receiver centroid."""
    emitter = scenario.require_emitter()
    return np.asarray(emitter.position) - receiver_centroid(scenario)


def true_direction(scenario: Scenario) -> np.ndarray:
    """Ground-truth DOA (x - centroid)/||x - centroid||."""
    offset = emitter_offset(scenario)
    return offset / np.linalg.norm(offset)


def far_field_quality(scenario: Scenario) -> float:
    """q = max_i ||x_i - centroid|| / ||x - centroid||; small means far field."""
    aperture = np.linalg.norm(centered_positions(scenario), axis=1).max()
    emitter_range = np.linalg.norm(emitter_offset(scenario))
    if emitter_range == 0.0:
        return math.inf
    return float(aperture / emitter_range)


def _check_vector(report: DiagnosticReport, values: Vector, dim: int, name: str):
    if len(values) != dim:
        report.add_error("dimension_mismatch", f"expected {dim} components, found {len(values)}", name)
    elif not all(math.isfinite(v) for v in values):
        report.add_error("non_finite", "all components must be finite", name)


def _check_pairing(report: DiagnosticReport, pairing: PairingScheme, n: int):
    if pairing.kind not in PAIRING_KINDS:
        report.add_error("unknown_pairing", f"unknown pairing kind '{pairing.kind}'", "pairing.kind")
        return
    if pairing.kind == "reference":
        if not 0 <= pairing.ref_index < n:
            report.add_error("invalid_pair_index",
                             f"ref_index {pairing.ref_index + 1} outside [1, {n}]", "pairing.ref_index")
        return
    if pairing.kind == "explicit":
        if not pairing.pairs:
            report.add_error("empty_pairing", "explicit pairing needs at least one pair", "pairing.pairs")
        seen = set()
        for k, (i, j) in enumerate(pairing.pairs):
            name = f"pairing.pairs[{k}]"
            if not (0 <= i < n and 0 <= j < n):
                report.add_error("invalid_pair_index", f"pair ({i + 1}, {j + 1}) outside [1, {n}]", name)
            if i == j:
                report.add_error("self_pair", f"pair ({i + 1}, {j + 1}) differences a receiver with itself", name)
            if (i, j) in seen:
                report.add_error("repeated_pair", f"pair ({i + 1}, {j + 1}) is repeated", name)
            seen.add((i, j))


def _check_noise(report: DiagnosticReport, noise: NoiseModel, n_pairs: Optional[int]):
    if noise.kind not in NOISE_KINDS:
        report.add_error("unknown_noise", f"unknown noise kind '{noise.kind}'", "noise.kind")
        return
    if not 0 <= noise.seed < MAX_SEED:
        report.add_error("invalid_seed", "seed must be a 64-bit unsigned integer", "noise.seed")
    if not math.isfinite(noise.sigma) or noise.sigma < 0:
        report.add_error("invalid_sigma", f"sigma must be finite and >= 0, got {noise.sigma}", "noise.sigma")
    elif noise.kind in ("iid", "differenced") and noise.sigma == 0.0:
        report.add_warning("zero_sigma", f"noise kind '{noise.kind}' with sigma 0 adds no noise", "noise.sigma")
    if noise.kind != "explicit":
        return

    Q = noise.covariance_matrix
    if Q is None:
        report.add_error("missing_covariance", "explicit noise requires Q", "noise.Q")
        return
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        report.add_error("non_spd_covariance", f"Q must be square, got shape {Q.shape}", "noise.Q")
        return
    if n_pairs is not None and Q.shape[0] != n_pairs:
        report.add_error("covariance_size", f"Q is {Q.shape[0]}x{Q.shape[1]} but there are {n_pairs} pairs",
                         "noise.Q")
    if not np.all(np.isfinite(Q)):
        report.add_error("non_spd_covariance", "Q has non-finite entries", "noise.Q")
        return
    scale = np.abs(Q).max()
    if np.abs(Q - Q.T).max() > COVARIANCE_RTOL * scale:
        report.add_error("non_spd_covariance", "Q is not symmetric", "noise.Q")
        return
    eigenvalues = np.linalg.eigvalsh(Q)
    if scale == 0.0 or eigenvalues[0] <= COVARIANCE_RTOL * eigenvalues[-1]:
        report.add_error("non_spd_covariance",
                         f"Q is not positive definite (minimum eigenvalue {eigenvalues[0]:.3e})", "noise.Q")


def _check_units(report: DiagnosticReport, units: UnitConvention):
    if units.mode not in UNIT_MODES:
        report.add_error("unknown_units", f"unknown unit mode '{units.mode}'", "units.mode")
    elif units.mode == "physical":
        for name in ("f0", "c"):
            value = getattr(units, name)
            if value is None or not math.isfinite(value) or value <= 0:
                report.add_error("invalid_units", f"{name} must be > 0 in physical mode", f"units.{name}")


def validate(scenario: Scenario) -> List[Diagnostic]:
    """Check every scenario invariant. Returns errors and warnings; never raises."""
    report = DiagnosticReport()
    n = scenario.n_receivers
    dim = scenario.dim

    if dim not in (2, 3):
        report.add_error("dimension_mismatch", f"dim must be 2 or 3, got {dim}", "dim")
    if n < 2:
        report.add_error("too_few_receivers", f"need at least 2 receivers, found {n}", "receivers")
    for k, receiver in enumerate(scenario.receivers):
        _check_vector(report, receiver.position, dim, f"receivers[{k}].position")
        _check_vector(report, receiver.velocity, dim, f"receivers[{k}].velocity")
    if scenario.emitter is not None:
        _check_vector(report, scenario.emitter.position, dim, "emitter.position")

    errors_before = len(report.errors)
    _check_pairing(report, scenario.pairing, n)
    n_pairs = len(scenario.pairs) if len(report.errors) == errors_before else None
    _check_noise(report, scenario.noise, n_pairs)
    _check_units(report, scenario.units)

    if report.errors:
        return report.diagnostics

    X = scenario.positions
    V = scenario.velocities
    for i in range(n):
        for j in range(i + 1, n):
            if np.array_equal(V[i], V[j]):
                report.add_warning("null_fdoa_row",
                                   f"receivers {i + 1} and {j + 1} have identical velocity vectors: "
                                   "FDOA row will be null after differencing", "receivers")
            if np.array_equal(X[i], X[j]):
                report.add_warning("null_tdoa_row",
                                   f"receivers {i + 1} and {j + 1} share a position: "
                                   "TDOA row will be null after differencing", "receivers")

    if scenario.emitter is not None:
        x = np.asarray(scenario.emitter.position)
        for k in range(n):
            if np.array_equal(X[k], x):
                report.add_error("coincident_emitter",
                                 f"emitter coincides with receiver {k + 1} (zero range)", "emitter.position")
        q = far_field_quality(scenario)
        if q > FAR_FIELD_WARNING_THRESHOLD:
            report.add_warning("near_field",
                               f"far-field quality factor q = {q:.3g} exceeds {FAR_FIELD_WARNING_THRESHOLD}",
                               "emitter.position")

    return report.diagnostics


def ensure_valid(scenario: Scenario) -> Scenario:
    """Raise ScenarioValidationError on any error diagnostic; log the warnings."""
    diagnostics = validate(scenario)
    errors = [d for d in diagnostics if d.severity == "error"]
    if errors:
        raise ScenarioValidationError(errors)
    for d in diagnostics:
        logger.warning(d.message)
    return scenario
