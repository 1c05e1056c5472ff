"""Experiment configuration: a JSON document mirroring ``ExperimentConfig``."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..ensemble import InitialDistribution
from ..errors import BadSpec, ConfigError
from ..meanfield import GainSchedule, VariantId, blended_schedule, preset
from ..model import LinearGaussianModel, TimeGrid, check_step, validate_model

SCENARIOS = ("moment-convergence", "gaussian-gap", "variance-error-scaling", "conjecture-probe")
MAX_STEPS = 10 ** 7


@dataclass
class ExperimentConfig:
    scenario: str
    model: dict = field(default_factory=lambda: {"A": 0.0, "H": 1.0, "sigma_B": 1.0})
    grid: dict = field(default_factory=lambda: {"dt": 0.01, "horizon": 10.0})
    variants: list = field(default_factory=lambda: ["p-enkf", "s-enkf", "d-enkf"])
    N_list: list = field(default_factory=lambda: [1000])
    trials: int = 1
    init_truth: dict = field(default_factory=lambda: {"m0": 0.0, "Sigma0": 1.0})
    init_filter: dict = field(default_factory=lambda: {"m0": 0.0, "Sigma0": 1.0})
    # None -> symmetric two-point law moment matched to init_filter
    init_ensemble: dict | None = None
    seed: int = 0
    # [t_lo, t_hi] or {variant: [t_lo, t_hi]}
    fit_window: list | dict = field(default_factory=lambda: [1.0, 5.0])
    output_dir: str = "output"
    # optional knobs
    custom: dict = field(default_factory=lambda: {"signal_scale": 0.5, "obs_scale": 0.5})
    record_every: int = 10
    csv_trials: int | None = None
    batch_size: int = 50
    reference_N: int | None = None
    reference_stream: str = "independent"
    init_test: dict | None = None

    # -- derived objects -------------------------------------------------

    @property
    def model_obj(self) -> LinearGaussianModel:
        mo = self.model
        return LinearGaussianModel(
            float(mo["A"]), float(mo["H"]), float(mo["sigma_B"]),
            float(self.init_truth["m0"]), float(self.init_truth["Sigma0"]),
        )

    @property
    def grid_obj(self) -> TimeGrid:
        return TimeGrid.from_horizon(float(self.grid["dt"]), float(self.grid["horizon"]))

    @property
    def variant_ids(self) -> list:
        return [VariantId.parse(v) for v in self.variants]

    def schedule(self, v) -> GainSchedule:
        v = VariantId.parse(v)
        if v is VariantId.CUSTOM:
            return blended_schedule(self.model_obj, float(self.custom["signal_scale"]),
                                    float(self.custom["obs_scale"]))
        return preset(v, self.model_obj)

    @property
    def filter_init(self) -> tuple:
        return float(self.init_filter["m0"]), float(self.init_filter["Sigma0"])

    @property
    def ensemble_init(self) -> InitialDistribution:
        if self.init_ensemble is None:
            return InitialDistribution.symmetric_two_point(*self.filter_init)
        return InitialDistribution.from_dict(self.init_ensemble)

    @property
    def test_init(self) -> InitialDistribution:
        if self.init_test is None:
            return self.ensemble_init
        return InitialDistribution.from_dict(self.init_test)

    def window_for(self, key) -> tuple:
        """Fit window for a variant (or ``"kalman-bucy"``)."""
        w = self.fit_window
        if isinstance(w, dict):
            key = key.value if isinstance(key, VariantId) else str(key)
            if key not in w:
                raise ConfigError(f"fit_window has no entry for {key!r}")
            w = w[key]
        return float(w[0]), float(w[1])

    # -- io ----------------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "scenario" not in d:
            raise ConfigError("config needs a 'scenario'")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        _validate(self)


def load_config(path) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def _check_window(name, w, horizon):
    try:
        lo, hi = float(w[0]), float(w[1])
    except (TypeError, ValueError, IndexError, KeyError) as exc:
        raise ConfigError(f"{name} must be [t_lo, t_hi]") from exc
    if not (0 <= lo < hi <= horizon + 1e-12):
        raise ConfigError(f"{name} {w} must satisfy 0 <= t_lo < t_hi <= horizon ({horizon})")


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; expected one of {SCENARIOS}")
    try:
        for k in ("A", "H", "sigma_B"):
            float(cfg.model[k])
        dt, horizon = float(cfg.grid["dt"]), float(cfg.grid["horizon"])
        for d in (cfg.init_truth, cfg.init_filter):
            float(d["m0"]), float(d["Sigma0"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed model/grid/init section: {exc}") from exc
    validate_model(cfg.model_obj)
    if not float(cfg.init_filter["Sigma0"]) > 0:
        raise ConfigError("init_filter.Sigma0 must be > 0")
    if not (dt > 0 and horizon > 0):
        raise ConfigError("grid.dt and grid.horizon must be > 0")
    if horizon / dt > MAX_STEPS:
        raise ConfigError(f"horizon/dt = {horizon / dt:.3g} exceeds {MAX_STEPS} steps")
    check_step(cfg.model_obj, dt)
    if int(cfg.trials) != cfg.trials or cfg.trials < 1:
        raise ConfigError("trials must be an integer >= 1")
    if not cfg.variants:
        raise ConfigError("variants must be non-empty")
    try:
        cfg.variant_ids
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not cfg.N_list or any(int(n) != n or n < 2 for n in cfg.N_list):
        raise ConfigError("N_list entries must be integers >= 2")
    if int(cfg.seed) != cfg.seed or not 0 <= cfg.seed < 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if isinstance(cfg.fit_window, dict):
        for v, w in cfg.fit_window.items():
            _check_window(f"fit_window[{v}]", w, horizon)
    else:
        _check_window("fit_window", cfg.fit_window, horizon)
    if cfg.record_every < 1 or cfg.batch_size < 1:
        raise ConfigError("record_every and batch_size must be >= 1")
    if cfg.reference_stream not in ("independent", "shared"):
        raise ConfigError("reference_stream must be 'independent' or 'shared'")
    try:
        cfg.ensemble_init, cfg.test_init
    except BadSpec as exc:
        raise ConfigError(f"bad initial distribution: {exc}") from exc
    if cfg.scenario == "variance-error-scaling":
        if len(set(cfg.N_list)) < 4:
            raise ConfigError("variance-error-scaling needs >= 4 distinct N values")
