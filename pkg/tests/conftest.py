import math
from pathlib import Path

import numpy as np
import pytest

from farfield_doa.scenario import PairingScheme, Scenario
from farfield_doa.scenario_file import load_scenario

SCENARIOS_DIR = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def scenarios_dir() -> Path:
    return SCENARIOS_DIR


@pytest.fixture
def three_receiver_scenario() -> Scenario:
    return load_scenario(SCENARIOS_DIR / "three_receivers.json")


@pytest.fixture
def standin_scenario() -> Scenario:
    return load_scenario(SCENARIOS_DIR / "sweep_standin.json")


def circle_array(n: int, radius: float = 1.0) -> np.ndarray:
    angles = 2.0 * math.pi * np.arange(n) / n + 0.37
    return radius * np.column_stack([np.cos(angles), np.sin(angles)])


def random_scenario(rng: np.random.Generator, n: int, dim: int, emitter_range: float = 1e3,
                    pairing: PairingScheme = None) -> Scenario:
    """Random receivers in a unit box with the emitter emitter_range away from their centroid."""
    positions = rng.uniform(-1.0, 1.0, size=(n, dim))
    velocities = rng.normal(size=(n, dim))
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    emitter = positions.mean(axis=0) + emitter_range * direction
    return Scenario.from_arrays(positions, velocities, emitter=emitter, pairing=pairing)
