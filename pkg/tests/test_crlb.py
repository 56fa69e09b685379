import logging
import math

import numpy as np
import pandas as pd
import pytest

from farfield_doa.crlb import (
    aoa_crlb,
    arrival_time_gradients,
    crlb_sweep,
    fdoa_jacobian,
    frequency_shift_gradients,
    tdoa_aoa_crlb,
    write_crlb_sweep,
)
from farfield_doa.errors import AoaUnobservableError, PreconditionError
from farfield_doa.measurement import build_differencing_matrix, exact_frequency_shifts, exact_toa, measure
from farfield_doa.scenario import NoiseModel, PairingScheme, Scenario, receiver_centroid
from farfield_doa.scenario_file import load_scenario

from tests.conftest import random_scenario


def moved(scenario: Scenario, emitter) -> Scenario:
    return Scenario.from_arrays(scenario.positions, scenario.velocities, emitter=emitter,
                                pairing=scenario.pairing, noise=scenario.noise, units=scenario.units)


def central_difference(scenario: Scenario, shifts, step: float) -> np.ndarray:
    x = np.asarray(scenario.emitter.position)
    columns = []
    for k in range(scenario.dim):
        delta = np.zeros(scenario.dim)
        delta[k] = step
        plus = shifts(moved(scenario, x + delta)).values
        minus = shifts(moved(scenario, x - delta)).values
        columns.append((plus - minus) / (2.0 * step))
    return np.column_stack(columns)


@pytest.mark.parametrize("gradients, shifts", [
    (frequency_shift_gradients, exact_frequency_shifts),
    (arrival_time_gradients, exact_toa),
])
def test_gradients_match_finite_differences(gradients, shifts):
    rng = np.random.default_rng(11)
    for _ in range(100):
        dim = int(rng.integers(2, 4))
        scenario = random_scenario(rng, int(rng.integers(3, 7)), dim, emitter_range=rng.uniform(3.0, 30.0))
        analytic = gradients(scenario)
        numeric = central_difference(scenario, shifts, 1e-6)
        assert np.linalg.norm(analytic - numeric) <= 1e-6 * np.linalg.norm(analytic)


def test_gradient_of_a_receiver_on_the_emitter_axis():
    r = 5.0
    scenario = Scenario.from_arrays([[0.0, 0.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, 1.0]], emitter=[r, 0.0])
    gradients = frequency_shift_gradients(scenario)
    np.testing.assert_allclose(gradients[0], [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(gradients[1], [0.0, -1.0 / r])


def test_fdoa_jacobian_differences_the_gradients(three_receiver_scenario):
    P = build_differencing_matrix(three_receiver_scenario.pairing, 3)
    np.testing.assert_allclose(fdoa_jacobian(three_receiver_scenario), P.entries @ frequency_shift_gradients(three_receiver_scenario))


def fisher_by_finite_differences(scenario: Scenario, kind: str, Q: np.ndarray, step: float = 1e-6) -> float:
    """Differentiate the full exact measurement map along the AOA circle around the centroid."""
    centroid = receiver_centroid(scenario)
    offset = np.asarray(scenario.emitter.position) - centroid
    r = np.linalg.norm(offset)
    theta = math.atan2(offset[1], offset[0])

    def f(angle):
        emitter = centroid + r * np.array([math.cos(angle), math.sin(angle)])
        return measure(moved(scenario, emitter), kind, "exact").values

    g = (f(theta + step) - f(theta - step)) / (2.0 * step)
    return float(g @ np.linalg.solve(Q, g))


@pytest.mark.parametrize("kind, bound", [("fdoa", aoa_crlb), ("tdoa", tdoa_aoa_crlb)])
def test_crlb_matches_a_brute_force_oracle(kind, bound):
    scenario = Scenario.from_arrays([[0.0, 0.0], [3.0, 0.5], [1.0, 2.5]],
                                    [[1.0, 0.3], [-0.2, 0.8], [0.6, -0.9]],
                                    emitter=[40.0, 25.0],
                                    noise=NoiseModel(kind="differenced", sigma=0.01))
    report = bound(scenario)
    oracle = fisher_by_finite_differences(scenario, kind, report.Q_used)
    assert report.fisher_information == pytest.approx(oracle, rel=1e-5)
    assert report.crlb_aoa_variance == pytest.approx(1.0 / oracle, rel=1e-5)


def test_crlb_scales_with_noise_power(standin_scenario):
    bounds = crlb_sweep(standin_scenario, [1e-8, 4e-8, 1e-6])
    assert bounds[1] / bounds[0] == pytest.approx(4.0)
    assert bounds[2] / bounds[0] == pytest.approx(100.0)


def test_explicit_covariance_argument(standin_scenario):
    Q = np.array([[2.0, 1.0], [1.0, 2.0]]) * 1e-6
    assert aoa_crlb(standin_scenario, Q).crlb_aoa_variance == pytest.approx(
        aoa_crlb(standin_scenario).crlb_aoa_variance)


def test_crlb_needs_two_dimensions(scenarios_dir):
    scenario = load_scenario(scenarios_dir / "four_receivers_3d.yaml")
    with pytest.raises(PreconditionError, match="D = 2"):
        aoa_crlb(scenario)


def test_crlb_needs_noise(three_receiver_scenario):
    with pytest.raises(PreconditionError, match="zero"):
        aoa_crlb(three_receiver_scenario)


def test_stationary_receivers_make_the_aoa_unobservable():
    scenario = Scenario.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], np.zeros((3, 2)),
                                    emitter=[100.0, 100.0], noise=NoiseModel(kind="iid", sigma=0.1))
    with pytest.raises(AoaUnobservableError):
        aoa_crlb(scenario)


def test_singular_covariance_falls_back_to_the_pseudo_inverse(standin_scenario, caplog):
    scenario = Scenario.from_arrays(standin_scenario.positions, standin_scenario.velocities,
                                    emitter=standin_scenario.emitter.position,
                                    pairing=PairingScheme.all_pairs(), noise=standin_scenario.noise)
    with caplog.at_level(logging.WARNING):
        report = aoa_crlb(scenario)
    assert "pseudo-inverse" in caplog.text
    assert math.isfinite(report.crlb_aoa_variance) and report.crlb_aoa_variance > 0


def test_write_crlb_sweep(tmp_path):
    path = tmp_path / "crlb.csv"
    write_crlb_sweep([1e-6, 1e-5], [2.5e-3, 2.5e-2], path)
    assert path.read_text().splitlines()[0] == "noise_power,crlb_var_rad2"
    frame = pd.read_csv(path, float_precision="round_trip")
    assert frame["noise_power"].tolist() == [1e-6, 1e-5]
    assert frame["crlb_var_rad2"].tolist() == [2.5e-3, 2.5e-2]


def test_receivers_on_the_bearing_line_leave_the_tdoa_aoa_unobservable():
    bearing = np.array([math.cos(0.4), math.sin(0.4)])
    positions = np.outer([0.0, 1.0, 2.5], bearing)
    scenario = Scenario.from_arrays(positions, [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
                                    emitter=1e4 * bearing, noise=NoiseModel(kind="iid", sigma=1e-3))
    with pytest.raises(AoaUnobservableError):
        tdoa_aoa_crlb(scenario)


def rotated(scenario: Scenario, angle: float) -> Scenario:
    R = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    return Scenario.from_arrays(scenario.positions @ R.T, scenario.velocities @ R.T,
                                emitter=R @ np.asarray(scenario.emitter.position),
                                pairing=scenario.pairing, noise=scenario.noise, units=scenario.units)


@pytest.mark.parametrize("bound", [aoa_crlb, tdoa_aoa_crlb])
def test_fisher_information_is_rotation_invariant(standin_scenario, bound):
    J = bound(standin_scenario).fisher_information
    for angle in (0.3, 2.0, -1.2):
        assert bound(rotated(standin_scenario, angle)).fisher_information == pytest.approx(J, rel=1e-9)


def test_tdoa_fisher_information_grows_with_the_baseline_squared():
    positions = np.array([[0.0, 0.0], [1.0, 0.2], [0.3, 1.1]])
    centroid = positions.mean(axis=0)
    emitter = centroid + 1e4 * np.array([math.cos(0.7), math.sin(0.7)])
    noise = NoiseModel(kind="differenced", sigma=1e-3)

    def fisher(s):
        scaled = centroid + s * (positions - centroid)
        return tdoa_aoa_crlb(Scenario.from_arrays(scaled, np.zeros((3, 2)), emitter=emitter,
                                                  noise=noise)).fisher_information

    assert fisher(3.0) / fisher(1.0) == pytest.approx(9.0, rel=1e-3)
