from .config import ExperimentConfig, load_config
from .scenarios import (
    run_conjecture_probe,
    run_gaussian_gap,
    run_moment_convergence,
    run_scenario,
    run_variance_error_scaling,
)

__all__ = [
    "ExperimentConfig",
    "load_config",
    "run_scenario",
    "run_moment_convergence",
    "run_gaussian_gap",
    "run_variance_error_scaling",
    "run_conjecture_probe",
]
