"""Kalman-Bucy reference filter driven by a shared observation path.

The same routine propagates the mean-field moments of an EnKF started from a
(possibly wrong) initialization, since those obey the identical equations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonPositiveVariance
from .model import LinearGaussianModel, ObservationPath, TimeGrid
from .riccati import integrate_riccati


@dataclass(frozen=True)
class FilterState:
    m: float
    Sigma: float
    t: float = 0.0

    def __post_init__(self):
        if not self.Sigma > 0:
            raise NonPositiveVariance(f"filter variance must be > 0, got {self.Sigma}")


@dataclass(frozen=True)
class MomentPath:
    grid: TimeGrid
    means: np.ndarray = field(repr=False)
    variances: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = self.grid.n_steps + 1
        if self.means.shape[-1] != n or self.variances.shape[-1] != n:
            raise ValueError("moment path length must be n_steps + 1")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


def kalman_gain(state: FilterState, m: LinearGaussianModel) -> float:
    return state.Sigma * m.H


def propagate_mean(m: LinearGaussianModel, variances, dz, m0, dt):
    """Explicit Euler recursion for the filter mean.

    ``dz`` may carry leading batch axes (one observation path per row); the
    last axis is time. Returns an array with one more time point than ``dz``.
    """
    dz = np.asarray(dz, dtype=float)
    n = dz.shape[-1]
    out = np.empty(dz.shape[:-1] + (n + 1,))
    mean = np.broadcast_to(np.asarray(m0, dtype=float), dz.shape[:-1]).copy()
    out[..., 0] = mean
    a, h = m.A, m.H
    for k in range(n):
        s = variances[k]
        mean = mean + a * mean * dt + s * h * (dz[..., k] - h * mean * dt)
        out[..., k + 1] = mean
    return out


def run_kalman_bucy(m: LinearGaussianModel, obs: ObservationPath, init: FilterState) -> MomentPath:
    """Kalman-Bucy filter along ``obs`` from ``init``.

    The variance is stepped with the same RK4 scheme as ``integrate_riccati``
    and therefore does not depend on the observations at all.
    """
    grid = obs.grid
    variances = integrate_riccati(m, init.Sigma, grid)
    means = propagate_mean(m, variances, obs.increments, init.m, grid.dt)
    return MomentPath(grid, means, variances)
