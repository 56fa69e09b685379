# farfield_doa/__init__.py

__version__ = "0.1.0"

from .scenario import Scenario, validate
from .scenario_file import load_scenario, save_scenario
from .measurement import add_noise, build_differencing_matrix, measure
from .estimator import build_system, estimate_doa, triangulate
from .crlb import aoa_crlb, tdoa_aoa_crlb
from .montecarlo import TrialConfig, run_sweep
