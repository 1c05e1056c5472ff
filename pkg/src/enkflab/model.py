"""Scalar linear-Gaussian signal/observation model and its path simulator.

The signal and observation processes are

    dX_t = A X_t dt + sigma_B dB_t,      X_0 ~ N(m0, Sigma0)
    dZ_t = H X_t dt + dW_t

discretized with Euler-Maruyama on a uniform grid. Observations are kept as
increments dZ_k so that every filter in a trial consumes the same inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .errors import DegenerateModel, StepTooLarge


@dataclass(frozen=True)
class LinearGaussianModel:
    A: float
    H: float
    sigma_B: float
    m0: float = 0.0
    Sigma0: float = 1.0

    @property
    def Sigma_B(self) -> float:
        return self.sigma_B * self.sigma_B

    def with_prior(self, m0: float, Sigma0: float) -> "LinearGaussianModel":
        return LinearGaussianModel(self.A, self.H, self.sigma_B, m0, Sigma0)


def validate_model(m: LinearGaussianModel) -> LinearGaussianModel:
    """Return ``m`` unchanged if it is controllable, observable and has a proper prior."""
    problems = []
    if m.sigma_B == 0:
        problems.append("sigma_B = 0 (not controllable)")
    if m.H == 0:
        problems.append("H = 0 (not observable)")
    if not m.Sigma0 > 0:
        problems.append(f"Sigma0 = {m.Sigma0} must be > 0")
    for name in ("A", "H", "sigma_B", "m0", "Sigma0"):
        if not np.isfinite(getattr(m, name)):
            problems.append(f"{name} is not finite")
    if problems:
        raise DegenerateModel(
            "Assumption II (controllable and observable) violated: " + "; ".join(problems)
        )
    return m


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")

    @classmethod
    def from_horizon(cls, dt: float, horizon: float, t0: float = 0.0) -> "TimeGrid":
        return cls(dt=dt, n_steps=int(round(horizon / dt)), t0=t0)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def index_of(self, t: float) -> int:
        """Nearest grid index to time ``t``."""
        k = int(round((t - self.t0) / self.dt))
        if k < 0 or k > self.n_steps:
            raise ValueError(f"time {t} outside grid [{self.t0}, {self.t0 + self.horizon}]")
        return k


@dataclass(frozen=True)
class SignalPath:
    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.values) != self.grid.n_steps + 1:
            raise ValueError("signal path length must be n_steps + 1")


@dataclass(frozen=True)
class ObservationPath:
    grid: TimeGrid
    increments: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.increments) != self.grid.n_steps:
            raise ValueError("observation path must hold one increment per step")

    @property
    def cumulative(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.increments)])


def check_step(m: LinearGaussianModel, dt: float) -> None:
    if not abs(1.0 + m.A * dt) < 2.0:
        raise StepTooLarge(f"|1 + A*dt| = {abs(1.0 + m.A * dt):.3g} >= 2; reduce dt")


def simulate_truth(m: LinearGaussianModel, grid: TimeGrid, rng=None, check: bool = True):
    """Simulate the signal and observation increments on ``grid``.

    Draw order from the generator is fixed: X_0, then the n signal normals,
    then the n observation normals. ``check=False`` skips model validation so
    that noiseless (sigma_B = 0, Sigma0 = 0) oracle paths can be produced.
    """
    if check:
        validate_model(m)
    check_step(m, grid.dt)
    rng = np.random.default_rng(rng)
    n, dt = grid.n_steps, grid.dt
    x0 = m.m0 + np.sqrt(max(m.Sigma0, 0.0)) * rng.standard_normal()
    xi = rng.standard_normal(n)
    eta = rng.standard_normal(n)

    sq = np.sqrt(dt)
    # X_{k+1} = (1 + A dt) X_k + sigma_B sqrt(dt) xi_k as a first-order recursive filter
    drive = np.concatenate([[x0], m.sigma_B * sq * xi])
    x = lfilter([1.0], [1.0, -(1.0 + m.A * dt)], drive)
    dz = m.H * x[:-1] * dt + sq * eta
    return SignalPath(grid, x), ObservationPath(grid, dz)
