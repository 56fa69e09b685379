import math

import numpy as np
import pytest

from farfield_doa.errors import EXIT_VALIDATION, PreconditionError, ScenarioValidationError
from farfield_doa.scenario import (
    NoiseModel,
    PairingScheme,
    Receiver,
    Scenario,
    UnitConvention,
    ensure_valid,
    far_field_quality,
    receiver_centroid,
    true_direction,
    validate,
)


def codes(diagnostics, severity="error"):
    return {d.code for d in diagnostics if d.severity == severity}


def two_receivers(**kwargs) -> Scenario:
    return Scenario.from_arrays([[1.0, 0.0], [-1.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]], **kwargs)


def test_reference_pairing_pairs_first_receiver_with_the_rest():
    assert PairingScheme.reference().pairs_for(3) == [(0, 1), (0, 2)]
    assert PairingScheme.reference(2).pairs_for(3) == [(2, 0), (2, 1)]


def test_all_pairs_is_lexicographic():
    assert PairingScheme.all_pairs().pairs_for(4) == [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]


def test_bundled_scenarios_validate_cleanly(three_receiver_scenario, standin_scenario):
    assert validate(three_receiver_scenario) == []
    assert validate(standin_scenario) == []


def test_too_few_receivers():
    scenario = Scenario.from_arrays([[0.0, 0.0]], [[1.0, 0.0]])
    assert "too_few_receivers" in codes(validate(scenario))


def test_dimension_mismatch_names_the_receiver():
    broken = Scenario(dim=2, receivers=(Receiver((0.0, 0.0), (1.0, 0.0)),
                                        Receiver((1.0, 0.0, 0.0), (0.0, 1.0))))
    diagnostics = validate(broken)
    assert any(d.code == "dimension_mismatch" and d.field == "receivers[1].position" for d in diagnostics)


def test_non_finite_velocity():
    scenario = Scenario.from_arrays([[0.0, 0.0], [1.0, 0.0]], [[math.nan, 0.0], [0.0, 1.0]])
    assert "non_finite" in codes(validate(scenario))


@pytest.mark.parametrize("pairs, code", [
    ([(0, 0)], "self_pair"),
    ([(0, 1), (0, 1)], "repeated_pair"),
    ([(0, 5)], "invalid_pair_index"),
    ([], "empty_pairing"),
])
def test_explicit_pairing_errors(pairs, code):
    scenario = two_receivers(pairing=PairingScheme.explicit(pairs))
    assert code in codes(validate(scenario))


def test_reference_index_out_of_range():
    scenario = two_receivers(pairing=PairingScheme.reference(2))
    assert "invalid_pair_index" in codes(validate(scenario))


def test_explicit_covariance_must_be_positive_definite():
    noise = NoiseModel(kind="explicit", covariance=((1.0, 2.0), (2.0, 1.0)))
    scenario = Scenario.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                                    [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], noise=noise)
    assert "non_spd_covariance" in codes(validate(scenario))


def test_explicit_covariance_size_must_match_pairs():
    noise = NoiseModel(kind="explicit", covariance=((1.0,),))
    scenario = Scenario.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                                    [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], noise=noise)
    assert codes(validate(scenario)) == {"covariance_size"}


def test_physical_units_need_f0_and_c():
    scenario = two_receivers(units=UnitConvention(mode="physical", f0=1e9))
    diagnostics = validate(scenario)
    assert any(d.code == "invalid_units" and d.field == "units.c" for d in diagnostics)


def test_negative_sigma():
    scenario = two_receivers(noise=NoiseModel(kind="iid", sigma=-1.0))
    assert "invalid_sigma" in codes(validate(scenario))


def test_emitter_on_a_receiver_is_an_error():
    scenario = two_receivers(emitter=[1.0, 0.0])
    assert "coincident_emitter" in codes(validate(scenario))


def test_identical_velocities_warn_about_null_fdoa_rows():
    scenario = Scenario.from_arrays([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
                                    [[1.0, 1.0], [1.0, 1.0], [0.0, 1.0]], emitter=[1e6, 1e6])
    diagnostics = validate(scenario)
    assert codes(diagnostics) == set()
    warning = next(d for d in diagnostics if d.code == "null_fdoa_row")
    assert "FDOA row will be null after differencing" in warning.message


def test_near_field_emitter_warns():
    scenario = two_receivers(emitter=[0.0, 5.0])
    assert "near_field" in codes(validate(scenario), "warning")


def test_far_field_quality_and_centroid():
    scenario = two_receivers(emitter=[0.0, 10.0])
    np.testing.assert_array_equal(receiver_centroid(scenario), [0.0, 0.0])
    assert far_field_quality(scenario) == pytest.approx(0.1)


def test_true_direction_is_relative_to_the_centroid():
    scenario = Scenario.from_arrays([[10.0, 10.0], [12.0, 10.0]], [[0.0, 1.0], [1.0, 0.0]],
                                    emitter=[11.0, 20.0])
    np.testing.assert_allclose(true_direction(scenario), [0.0, 1.0])


def test_ensure_valid_raises_with_the_diagnostics():
    scenario = Scenario.from_arrays([[0.0, 0.0]], [[1.0, 0.0]])
    with pytest.raises(ScenarioValidationError) as excinfo:
        ensure_valid(scenario)
    assert excinfo.value.exit_code == EXIT_VALIDATION
    assert [d.code for d in excinfo.value.diagnostics] == ["too_few_receivers"]


def test_require_emitter_names_the_field():
    with pytest.raises(PreconditionError, match="'emitter'"):
        two_receivers().require_emitter()


def test_validate_is_pure(three_receiver_scenario):
    before = Scenario.from_arrays(three_receiver_scenario.positions, three_receiver_scenario.velocities,
                                  emitter=three_receiver_scenario.emitter.position,
                                  pairing=three_receiver_scenario.pairing, noise=three_receiver_scenario.noise)
    first = validate(three_receiver_scenario)
    assert validate(three_receiver_scenario) == first
    assert three_receiver_scenario == before


def test_far_field_quality_is_translation_covariant():
    positions = np.array([[0.0, 0.0], [3.0, 1.0], [1.0, 4.0]])
    velocities = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    emitter = np.array([40.0, -25.0])
    q = far_field_quality(Scenario.from_arrays(positions, velocities, emitter=emitter))
    shift = np.array([1234.5, -678.25])
    moved = Scenario.from_arrays(positions + shift, velocities, emitter=emitter + shift)
    assert far_field_quality(moved) == pytest.approx(q, rel=1e-12)
