"""Continuous-time ensemble Kalman filters for the scalar linear-Gaussian model."""
from .ensemble import (
    Ensemble,
    EmpiricalMoments,
    InitialDistribution,
    empirical_moments,
    init_ensemble,
    run_enkf,
    step_ensemble,
)
from .errors import (
    BadSpec,
    ConfigError,
    DegenerateModel,
    EmptyWindow,
    EnkfLabError,
    EnsembleCollapse,
    LengthMismatch,
    NonPositiveValue,
    NonPositiveVariance,
    StepTooLarge,
)
from .kalman import FilterState, MomentPath, kalman_gain, run_kalman_bucy
from .meanfield import (
    GainSchedule,
    VariantId,
    asymptotic_rate,
    blended_schedule,
    check_constraint,
    gaussian_gap_factor,
    preset,
)
from .metrics import (
    RateFit,
    fit_decay_rate,
    fit_power_law,
    w2_empirical,
    w2_empirical_gaussian,
    w2_gaussian,
)
from .model import LinearGaussianModel, ObservationPath, SignalPath, TimeGrid, simulate_truth, validate_model
from .riccati import RiccatiConstants, constants, integrate_riccati, ricc, semigroup_grad, semigroup_phi

__version__ = "0.1.0"
