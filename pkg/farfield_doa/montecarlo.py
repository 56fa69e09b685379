# montecarlo.py

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg

from farfield_doa import __version__
from farfield_doa.crlb import aoa_crlb, tdoa_aoa_crlb
from farfield_doa.csv_files import write_frame
from farfield_doa.errors import AoaUnobservableError, NumericalDegeneracyError, PreconditionError
from farfield_doa.estimator import SYSTEM_KINDS, SystemMatrix, build_system, estimate_doa
from farfield_doa.measurement import (
    MeasurementVector,
    block_sigma,
    build_differencing_matrix,
    make_generator,
    measure,
    noise_at_power,
    noise_covariance,
    noise_factor,
    stack_measurements,
)
from farfield_doa.scenario import COVARIANCE_RTOL, Scenario, ensure_valid, true_direction

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ["noise_power", "estimator_variance", "crlb", "efficiency"]
MAX_FAILED_FRACTION = 0.5


@dataclass(frozen=True)
class TrialConfig:
    scenario: Scenario
    kind: str = "fdoa"
    noise_powers: Tuple[float, ...] = ()
    trials_per_level: int = 1000
    base_seed: int = 0
    whiten: bool = False
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "noise_powers", tuple(float(p) for p in self.noise_powers))

    def check(self):
        if self.kind not in SYSTEM_KINDS:
            raise PreconditionError(f"unknown kind '{self.kind}'")
        if self.trials_per_level < 2:
            raise PreconditionError(f"trials_per_level must be >= 2, got {self.trials_per_level}")
        if not self.noise_powers:
            raise PreconditionError("at least one noise power is required")
        powers = np.array(self.noise_powers)
        if np.any(powers <= 0) or np.any(np.diff(powers) <= 0):
            raise PreconditionError("noise powers must be strictly positive and sorted ascending")
        if not 0 <= self.base_seed < 2 ** 64:
            raise PreconditionError("base_seed must be a 64-bit unsigned integer")
        if self.scenario.dim != 2:
            raise PreconditionError("the AOA sweep needs a 2D scenario")
        self.scenario.require_emitter()


@dataclass(frozen=True)
class LevelRecord:
    noise_power: float
    aoa_variance: float
    aoa_bias: float
    aoa_mse: float
    mean_residual: float
    crlb: float
    efficiency: float
    trials_used: int
    trials_failed: int


@dataclass(frozen=True)
class SweepResult:
    true_aoa: float
    levels: Tuple[LevelRecord, ...] = field(default_factory=tuple)


def angular_error(theta_est: float, theta_true: float) -> float:
    """Wrapped difference theta_est - theta_true in (-pi, pi]."""
    error = math.remainder(theta_est - theta_true, 2.0 * math.pi)
    return math.pi if error == -math.pi else error


def trial_seed(base_seed: int, level_index: int, trial_index: int, block: int = 0) -> np.random.SeedSequence:
    """Order-independent per-trial stream: numpy's SeedSequence hash of (base_seed, level, trial, block)."""
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(level_index, trial_index, block))


def circular_statistics(errors: Sequence[float]) -> Tuple[float, float, float]:
    """(circular mean, variance about it with n - 1 dof, mean squared error about zero).

    Sums use math.fsum so the result does not depend on trial order.
    """
    n = len(errors)
    mean = math.atan2(math.fsum(math.sin(e) for e in errors), math.fsum(math.cos(e) for e in errors))
    deviations = [angular_error(e, mean) for e in errors]
    variance = math.fsum(d * d for d in deviations) / (n - 1)
    mse = math.fsum(e * e for e in errors) / n
    return mean, variance, mse


class SweepRunner:
    """Generates exact-model measurements, perturbs them and scores the far-field estimator."""

    def __init__(self, config: TrialConfig):
        config.check()
        self.config = config
        self.scenario = ensure_valid(config.scenario)
        self.kinds = ["fdoa", "tdoa"] if config.kind == "stacked" else [config.kind]
        self.truth = {k: measure(self.scenario, k, "exact") for k in self.kinds}
        self.true_aoa = math.atan2(*true_direction(self.scenario)[::-1])
        self.P = build_differencing_matrix(self.scenario.pairing, self.scenario.n_receivers)

    def _level_setup(self, noise_power: float):
        noise = noise_at_power(self.scenario.noise, noise_power)
        factor = noise_factor(noise, self.P)
        Q = noise_covariance(noise, self.P)
        if self.config.kind == "stacked":
            sigma = block_sigma(noise, self.P)
            system = build_system(self.scenario, "stacked", {"fdoa": sigma, "tdoa": sigma})
            covariance = scipy.linalg.block_diag(Q, Q)
        else:
            system = build_system(self.scenario, self.config.kind)
            covariance = Q
        if not self.config.whiten:
            return factor, Q, system, None
        eigenvalues = scipy.linalg.eigvalsh(Q)
        if eigenvalues[0] <= COVARIANCE_RTOL * eigenvalues[-1]:
            raise PreconditionError("whitening needs a positive definite noise covariance; "
                                    "use a non-redundant pairing or an explicit Q")
        return factor, Q, system, covariance

    def _noisy_measurements(self, factor: np.ndarray, level_index: int, trial_index: int) -> MeasurementVector:
        blocks = []
        for block, kind in enumerate(self.kinds):
            rng = make_generator(trial_seed(self.config.base_seed, level_index, trial_index, block))
            truth = self.truth[kind]
            blocks.append(truth.with_values(truth.values + factor @ rng.standard_normal(factor.shape[1])))
        return blocks[0] if len(blocks) == 1 else stack_measurements(*blocks)

    def _run_trial(self, factor, system: SystemMatrix, covariance, level_index: int, trial_index: int):
        m = self._noisy_measurements(factor, level_index, trial_index)
        try:
            estimate = estimate_doa(system, m, covariance=covariance)
        except NumericalDegeneracyError as e:
            logger.debug(f"Trial {trial_index} at level {level_index} failed: {e}")
            return None
        return angular_error(estimate.aoa, self.true_aoa), estimate.residual_norm

    def _crlb(self, Q: np.ndarray) -> float:
        if self.config.kind == "stacked":
            return math.nan
        compute = aoa_crlb if self.config.kind == "fdoa" else tdoa_aoa_crlb
        try:
            return compute(self.scenario, Q).crlb_aoa_variance
        except AoaUnobservableError as e:
            logger.warning(f"No CRLB for this level: {e}")
            return math.nan

    def run_level(self, level_index: int, noise_power: float) -> LevelRecord:
        factor, Q, system, covariance = self._level_setup(noise_power)
        trials = range(self.config.trials_per_level)

        def run(trial_index):
            return self._run_trial(factor, system, covariance, level_index, trial_index)

        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
                outcomes = list(pool.map(run, trials))
        else:
            outcomes = [run(t) for t in trials]

        results = [o for o in outcomes if o is not None]
        failed = len(outcomes) - len(results)
        if failed > MAX_FAILED_FRACTION * len(outcomes) or len(results) < 2:
            raise NumericalDegeneracyError(
                f"{failed} of {len(outcomes)} trials failed at noise power {noise_power:g}")

        errors = [e for e, _ in results]
        bias, variance, mse = circular_statistics(errors)
        mean_residual = math.fsum(r for _, r in results) / len(results)
        crlb = self._crlb(Q)
        efficiency = crlb / variance if variance > 0 else math.nan
        logger.info(f"Noise power {noise_power:.3e}: variance {variance:.3e}, CRLB {crlb:.3e}, "
                    f"{failed} failed trials")
        return LevelRecord(noise_power, variance, bias, mse, mean_residual, crlb, efficiency,
                           len(results), failed)

    def run(self) -> SweepResult:
        if self.config.kind == "stacked":
            logger.warning("Stacked sweeps carry no CRLB (joint Fisher information is not computed)")
        levels = tuple(self.run_level(k, p) for k, p in enumerate(self.config.noise_powers))
        return SweepResult(self.true_aoa, levels)


def run_sweep(config: TrialConfig) -> SweepResult:
    return SweepRunner(config).run()


def sweep_frame(result: SweepResult) -> pd.DataFrame:
    return pd.DataFrame(
        [(r.noise_power, r.aoa_variance, r.crlb, r.efficiency) for r in result.levels],
        columns=SWEEP_COLUMNS,
    )


def emit_sweep_data(result: SweepResult, path: Optional[Path]):
    write_frame(sweep_frame(result), path)


def write_manifest(path: Path, entries: Dict[str, object]):
    """key=value lines, one per entry, in insertion order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{key}={value}" for key, value in {**entries, "version": __version__}.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Run manifest written to {path}")


def sweep_manifest(config: TrialConfig, config_path: Optional[Path], command_line: List[str]) -> Dict[str, object]:
    return {
        "config": config_path if config_path is not None else "",
        "seed": config.base_seed,
        "command_line": " ".join(command_line),
        "kind": config.kind,
        "noise_powers": ",".join(repr(p) for p in config.noise_powers),
        "trials_per_level": config.trials_per_level,
        "whiten": config.whiten,
    }
