# cli.py

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

from farfield_doa import __version__
from farfield_doa.crlb import aoa_crlb, crlb_sweep, tdoa_aoa_crlb, write_crlb_sweep
from farfield_doa.csv_files import read_fixes, read_measurements, write_estimates, write_locus, write_measurements
from farfield_doa.diagnostics import DiagnosticReport
from farfield_doa.errors import EXIT_IO, EXIT_OK, EXIT_VALIDATION, FarfieldDoaError, PreconditionError
from farfield_doa.estimator import build_system, denoise_measurements, estimate_doa, triangulate
from farfield_doa.measurement import (
    MeasurementVector,
    add_noise,
    block_sigma,
    build_differencing_matrix,
    feasible_locus,
    measure,
    stack_measurements,
)
from farfield_doa.montecarlo import TrialConfig, emit_sweep_data, run_sweep, sweep_manifest, write_manifest
from farfield_doa.scenario import NoiseModel, Scenario, ensure_valid, far_field_quality, validate
from farfield_doa.scenario_file import load_scenario

logger = logging.getLogger(__name__)

SEED_ENVIRONMENT_VARIABLE = "FARFIELD_DOA_SEED"
DEFAULT_SEED = 0
MODEL_NAMES = {"exact": "exact", "farfield": "far_field"}


def say(message: str):
    """Human-readable output; always on the error stream so it never mixes with data."""
    print(message, file=sys.stderr)


def resolve_seed(seed: Optional[int], fallback: int = DEFAULT_SEED) -> int:
    if seed is not None:
        return seed
    from_environment = os.environ.get(SEED_ENVIRONMENT_VARIABLE)
    if from_environment:
        try:
            return int(from_environment)
        except ValueError:
            raise PreconditionError(f"{SEED_ENVIRONMENT_VARIABLE} must be an integer, got {from_environment!r}")
    return fallback


def noise_powers(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _load_valid_scenario(path: Path) -> Scenario:
    return ensure_valid(load_scenario(path))


def _noise_for(scenario: Scenario, sigma_override: Optional[float], seed: int) -> NoiseModel:
    noise = scenario.noise
    if sigma_override is not None:
        kind = noise.kind if noise.kind in ("iid", "differenced") else "differenced"
        return NoiseModel(kind=kind, sigma=sigma_override, seed=seed)
    return NoiseModel(kind=noise.kind, sigma=noise.sigma, covariance=noise.covariance, seed=seed)


def _generate(scenario: Scenario, kind: str, model: str, sigma_override: Optional[float],
              seed: int) -> MeasurementVector:
    m = measure(scenario, kind, MODEL_NAMES[model])
    noisy, _ = add_noise(m, _noise_for(scenario, sigma_override, seed))
    return noisy


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    report = DiagnosticReport()
    for d in validate(scenario):
        report.add_issue(d.severity, d.code, d.message, d.field)
        say(f"{d.severity}: {d.field + ': ' if d.field else ''}{d.message}")
    if args.report:
        report.generate_report(args.report)
    say(f"{len(report.errors)} errors, {len(report.warnings)} warnings")
    return EXIT_VALIDATION if report.errors else EXIT_OK


def cmd_measure(args) -> int:
    scenario = _load_valid_scenario(args.scenario)
    if scenario.emitter is not None:
        say(f"far-field quality factor q = {far_field_quality(scenario):.6g}")
    seed = resolve_seed(args.seed, scenario.noise.seed)
    m = _generate(scenario, args.kind, args.model, args.noise_override, seed)
    write_measurements(m, args.out)
    return EXIT_OK


def _check_pairs(scenario: Scenario, m: MeasurementVector):
    if list(m.pairs) != scenario.pairs:
        raise PreconditionError("measurement pairs do not match the scenario's pairing")


def _measurements_for(args, scenario: Scenario) -> MeasurementVector:
    if args.measurements:
        loaded = [read_measurements(path) for path in args.measurements]
        for m in loaded:
            _check_pairs(scenario, m)
        if args.kind == "stacked":
            by_kind = {m.kind: m for m in loaded}
            if set(by_kind) != {"fdoa", "tdoa"}:
                raise PreconditionError("stacked estimation needs one FDOA and one TDOA measurement file")
            return stack_measurements(by_kind["fdoa"], by_kind["tdoa"])
        if len(loaded) != 1:
            raise PreconditionError(f"{args.kind} estimation takes a single measurement file")
        return loaded[0]

    seed = resolve_seed(args.seed, scenario.noise.seed)
    if args.kind == "stacked":
        fdoa = _generate(scenario, "fdoa", args.model, args.noise_override, seed)
        tdoa = _generate(scenario, "tdoa", args.model, args.noise_override, seed + 1)
        return stack_measurements(fdoa, tdoa)
    return _generate(scenario, args.kind, args.model, args.noise_override, seed)


def estimation_system(scenario: Scenario, kind: str, sigma_override: Optional[float]):
    """Stacked blocks are weighted by 1/sigma of the noise the measurements carry."""
    if kind != "stacked":
        return build_system(scenario, kind)
    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    sigma = block_sigma(_noise_for(scenario, sigma_override, DEFAULT_SEED), P)
    return build_system(scenario, kind, None if sigma is None else {"fdoa": sigma, "tdoa": sigma})


def estimate_row(estimate) -> dict:
    row = {"kind": estimate.kind}
    if isinstance(estimate.aoa, tuple):
        row["theta_rad"], row["elevation_rad"] = estimate.aoa
    else:
        row["theta_rad"] = estimate.aoa
    for k, component in enumerate(estimate.direction):
        row[f"dir_{k + 1}"] = component
    row["residual"] = estimate.residual_norm
    row["raw_norm"] = estimate.raw_norm
    row["cond"] = estimate.condition_number
    return row


def cmd_estimate(args) -> int:
    scenario = _load_valid_scenario(args.scenario)
    m = _measurements_for(args, scenario)
    system = estimation_system(scenario, args.kind, args.noise_override)
    estimate = estimate_doa(system, m)
    angles = estimate.aoa if isinstance(estimate.aoa, tuple) else (estimate.aoa,)
    for name, angle in zip(("theta", "elevation"), angles):
        say(f"{name} = {angle:.12g} rad ({math.degrees(angle):.9g} deg)")
    say(f"raw solution norm = {estimate.raw_norm:.9g}, residual = {estimate.residual_norm:.6g}")
    write_estimates([estimate_row(estimate)], args.out)
    return EXIT_OK


def cmd_denoise(args) -> int:
    scenario = _load_valid_scenario(args.scenario)
    m = read_measurements(args.measurements)
    _check_pairs(scenario, m)
    denoised = denoise_measurements(m, build_system(scenario, m.kind))
    write_measurements(denoised, args.out)
    return EXIT_OK


def cmd_ellipse(args) -> int:
    scenario = _load_valid_scenario(args.scenario)
    system = build_system(scenario, args.kind)
    samples = feasible_locus(system.matrix, args.samples)
    P = build_differencing_matrix(scenario.pairing, scenario.n_receivers)
    write_locus(samples, P.pairs, "f" if args.kind == "fdoa" else "tau", args.out)
    return EXIT_OK


def cmd_crlb(args) -> int:
    scenario = _load_valid_scenario(args.scenario)
    if args.noise_powers:
        bounds = crlb_sweep(scenario, args.noise_powers, args.kind)
        write_crlb_sweep(args.noise_powers, bounds, args.out)
        return EXIT_OK
    report = (aoa_crlb if args.kind == "fdoa" else tdoa_aoa_crlb)(scenario)
    print(f"fisher_information={report.fisher_information!r}")
    print(f"crlb_var_rad2={report.crlb_aoa_variance!r}")
    say(f"AOA standard deviation bound = {math.sqrt(report.crlb_aoa_variance):.6g} rad")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = _load_valid_scenario(args.scenario)
    config = TrialConfig(
        scenario=scenario,
        kind=args.kind,
        noise_powers=tuple(args.noise_powers),
        trials_per_level=args.trials,
        base_seed=resolve_seed(args.seed),
        whiten=args.whiten,
        workers=args.workers,
    )
    result = run_sweep(config)
    emit_sweep_data(result, args.out)

    manifest = args.manifest
    if manifest is None and args.out is not None:
        manifest = args.out.with_suffix(".manifest")
    if manifest is not None:
        write_manifest(manifest, sweep_manifest(config, args.scenario, sys.argv if args.argv is None else args.argv))
    return EXIT_OK


def cmd_triangulate(args) -> int:
    fixes = read_fixes(args.fixes)
    result = triangulate(fixes)
    row = {axis: value for axis, value in zip("xyz", result.position)}
    row["residual"] = result.residual
    write_estimates([row], args.out)
    say("position = (" + ", ".join(f"{v:.9g}" for v in result.position) + ")")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Far-field DOA from TDOA/FDOA measurements")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", action="store_true", help="Enable verbose output")
    parser.add_argument("--quiet", action="store_true", help="Only report warnings and errors")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("validate", help="Check a scenario file")
    p.add_argument("scenario", type=Path)
    p.add_argument("--report", type=Path, help="Directory for validation_report.json and summary")
    p.set_defaults(func=cmd_validate)

    p = commands.add_parser("measure", help="Generate TDOA/FDOA measurements")
    p.add_argument("scenario", type=Path)
    p.add_argument("--kind", choices=["fdoa", "tdoa"], default="fdoa")
    p.add_argument("--model", choices=list(MODEL_NAMES), default="exact")
    p.add_argument("--noise-override", type=float, help="Noise sigma replacing the scenario's")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="Output CSV (standard output when omitted)")
    p.set_defaults(func=cmd_measure)

    p = commands.add_parser("estimate", help="Estimate the direction of arrival")
    p.add_argument("scenario", type=Path)
    p.add_argument("--measurements", type=Path, action="append",
                   help="Measurement CSV; give one FDOA and one TDOA file for --kind stacked")
    p.add_argument("--kind", choices=["fdoa", "tdoa", "stacked"], default="fdoa")
    p.add_argument("--model", choices=list(MODEL_NAMES), default="exact",
                   help="Model used when measurements are generated from the scenario")
    p.add_argument("--noise-override", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_estimate)

    p = commands.add_parser("denoise", help="Project measurements onto the far-field range")
    p.add_argument("scenario", type=Path)
    p.add_argument("--measurements", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_denoise)

    p = commands.add_parser("ellipse", help="Sample the feasible far-field measurement locus")
    p.add_argument("scenario", type=Path)
    p.add_argument("--samples", type=int, default=360)
    p.add_argument("--kind", choices=["fdoa", "tdoa"], default="fdoa")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_ellipse)

    p = commands.add_parser("crlb", help="Cramer-Rao bound on the angle of arrival")
    p.add_argument("scenario", type=Path)
    p.add_argument("--kind", choices=["fdoa", "tdoa"], default="fdoa")
    p.add_argument("--noise-powers", type=noise_powers)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_crlb)

    p = commands.add_parser("sweep", help="Monte-Carlo estimator variance against the CRLB")
    p.add_argument("scenario", type=Path)
    p.add_argument("--noise-powers", type=noise_powers, required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--kind", choices=["fdoa", "tdoa", "stacked"], default="fdoa")
    p.add_argument("--whiten", action="store_true", help="Weight the solve by the noise covariance")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path)
    p.add_argument("--manifest", type=Path, help="Run manifest (defaults next to --out)")
    p.set_defaults(func=cmd_sweep)

    p = commands.add_parser("triangulate", help="Locate the emitter from bearing fixes")
    p.add_argument("--fixes", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_triangulate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = None if argv is None else ["main.py"] + list(argv)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s: %(message)s")

    try:
        return args.func(args)
    except FarfieldDoaError as e:
        logger.error(str(e))
        return e.exit_code
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
