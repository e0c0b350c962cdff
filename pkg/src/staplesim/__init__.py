"""Simulation of a robot excavating and carrying entangled staple media.

Modules, bottom up: ``media`` (tensile law, media field, tearing), ``rig``
(virtual tensile tests and calibration), ``world`` (arena, light field,
piles), ``sensors`` (sensor models, camera, pile detector), ``agent`` (the
controller state machine), ``harness`` (trials and statistics) and ``cli``.
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:   # running from a source tree
    __version__ = "0.0.0"

from .harness import compare_conditions, run_experiment, run_trial
from .media import ConstitutiveParams, mean_tensile_force, sample_tensile_force
from .rig import fit_constitutive, run_protocol, run_tensile_trial
from .sensors import detect_piles
from .stats import welch_t_test

__all__ = [
    "ConstitutiveParams", "compare_conditions", "detect_piles", "fit_constitutive", "mean_tensile_force",
    "run_experiment", "run_protocol", "run_tensile_trial", "run_trial", "sample_tensile_force", "welch_t_test",
]
