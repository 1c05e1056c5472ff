"""Interacting particle system (the EnKF proper).

Each particle moves with the Kalman-Bucy mean update evaluated at the
ensemble's empirical moments, plus the schedule's deviation drift
``G*(X - mean)*dt`` and independent noises ``r*dB`` and ``q*dW``.

The engine stores every ensemble as ``mean + deviations`` and recentres the
deviations after each step. In exact arithmetic this is the plain particle
update; in floating point it makes the deviation dynamics (and hence the
empirical variance) independent of the size of the mean and of the
observations, which matters for the deterministic variant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from .errors import BadSpec, EnsembleCollapse
from .kalman import MomentPath
from .meanfield import GainSchedule
from .model import LinearGaussianModel, ObservationPath, TimeGrid

COLLAPSE_EPS = 1e-12

_KINDS = ("gaussian", "uniform", "two_point_mixture", "explicit", "gaussian_quantiles")


@dataclass(frozen=True)
class InitialDistribution:
    """Law of the initial particles.

    ``gaussian_quantiles`` is deterministic: the N midpoint quantiles
    ``m + s*Phi^-1((i - 1/2)/N)`` of the Gaussian.
    """

    kind: str
    params: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise BadSpec(f"unknown initial distribution kind {self.kind!r}")
        p = self.params
        if self.kind in ("gaussian", "gaussian_quantiles"):
            if len(p) != 2 or not p[1] > 0:
                raise BadSpec(f"{self.kind} needs (mean, variance > 0), got {p}")
        elif self.kind == "uniform":
            if len(p) != 2 or not p[1] > p[0]:
                raise BadSpec(f"uniform needs (a, b) with a < b, got {p}")
        elif self.kind == "two_point_mixture":
            if len(p) != 3 or p[0] == p[1] or not 0 < p[2] < 1:
                raise BadSpec(f"two_point_mixture needs (x1 != x2, 0 < w < 1), got {p}")
        elif self.kind == "explicit":
            xs = np.asarray(p, dtype=float)
            if xs.size < 2 or not np.all(np.isfinite(xs)) or np.ptp(xs) == 0:
                raise BadSpec("explicit samples need >= 2 finite, non-identical values")

    @classmethod
    def gaussian(cls, mean, variance):
        return cls("gaussian", (float(mean), float(variance)))

    @classmethod
    def gaussian_quantiles(cls, mean, variance):
        return cls("gaussian_quantiles", (float(mean), float(variance)))

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", (float(a), float(b)))

    @classmethod
    def two_point_mixture(cls, x1, x2, w):
        """Mass ``w`` at ``x1`` and ``1 - w`` at ``x2``."""
        return cls("two_point_mixture", (float(x1), float(x2), float(w)))

    @classmethod
    def symmetric_two_point(cls, mean, variance):
        """Two-point law at ``mean -/+ sqrt(variance)`` with equal weights (moment matched)."""
        s = math.sqrt(variance)
        return cls.two_point_mixture(mean - s, mean + s, 0.5)

    @classmethod
    def explicit(cls, samples):
        return cls("explicit", tuple(float(x) for x in samples))

    @property
    def mean(self) -> float:
        p = self.params
        if self.kind in ("gaussian", "gaussian_quantiles"):
            return p[0]
        if self.kind == "uniform":
            return 0.5 * (p[0] + p[1])
        if self.kind == "two_point_mixture":
            return p[2] * p[0] + (1 - p[2]) * p[1]
        return float(np.mean(p))

    @property
    def variance(self) -> float:
        p = self.params
        if self.kind in ("gaussian", "gaussian_quantiles"):
            return p[1]
        if self.kind == "uniform":
            return (p[1] - p[0]) ** 2 / 12.0
        if self.kind == "two_point_mixture":
            return p[2] * (1 - p[2]) * (p[0] - p[1]) ** 2
        return float(np.var(p))

    def sample(self, N: int, rng) -> np.ndarray:
        p = self.params
        if self.kind == "gaussian":
            return p[0] + math.sqrt(p[1]) * rng.standard_normal(N)
        if self.kind == "uniform":
            return rng.uniform(p[0], p[1], N)
        if self.kind == "two_point_mixture":
            return np.where(rng.random(N) < p[2], p[0], p[1])
        if self.kind == "gaussian_quantiles":
            return p[0] + math.sqrt(p[1]) * ndtri((np.arange(N) + 0.5) / N)
        xs = np.asarray(p, dtype=float)
        if len(xs) != N:
            raise BadSpec(f"explicit initial list has {len(xs)} samples, N = {N}")
        return xs.copy()

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d) -> "InitialDistribution":
        if not isinstance(d, dict) or "kind" not in d:
            raise BadSpec(f"initial distribution must be a mapping with 'kind', got {d!r}")
        return cls(d["kind"], tuple(float(x) for x in d.get("params", ())))


@dataclass(frozen=True)
class EmpiricalMoments:
    mean: float
    variance: float


@dataclass(frozen=True)
class Ensemble:
    t: float
    particles: np.ndarray = field(repr=False)

    def __post_init__(self):
        if np.ndim(self.particles) != 1 or len(self.particles) < 2:
            raise BadSpec("an ensemble needs a 1-D array of N >= 2 particles")

    @property
    def N(self) -> int:
        return len(self.particles)


def init_ensemble(law: InitialDistribution, N: int, rng=None) -> Ensemble:
    if N < 2:
        raise BadSpec(f"N must be >= 2, got {N}")
    rng = np.random.default_rng(rng)
    return Ensemble(0.0, np.asarray(law.sample(N, rng), dtype=float))


def empirical_moments(e: Ensemble) -> EmpiricalMoments:
    """Mean with 1/N and variance with 1/(N-1), using exactly rounded sums.

    Exact rounding makes the result independent of particle order.
    """
    x = e.particles
    n = len(x)
    mean = math.fsum(x) / n
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return EmpiricalMoments(mean, var)


# ---------------------------------------------------------------------------
# batched engine

def _n_noise(s: GainSchedule) -> int:
    return int(s.signal_noise) + int(s.obs_noise)


class _NoiseBlocks:
    """Per-row standard normals, drawn ahead in blocks of steps.

    Every row takes ``n_noise*N`` normals per step from its own generator
    (signal noise first, then observation noise). Generators fill arrays
    sequentially, so the values do not depend on the block length.
    """

    def __init__(self, gens, B, n_noise, N, shared, block_elems=1 << 20):
        self.gens, self.B, self.k, self.N, self.shared = gens, B, n_noise, N, shared
        rows = 1 if shared else B
        self.block = max(1, min(512, block_elems // max(1, rows * n_noise * N)))
        self._buf, self._pos = None, self.block

    def next(self):
        if self._pos >= self.block:
            if self.shared:
                self._buf = self.gens[0].standard_normal((self.block, 1, self.k, self.N))
            else:
                self._buf = np.stack(
                    [g.standard_normal((self.block, self.k, self.N)) for g in self.gens], axis=1
                )
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out


@dataclass
class BatchResult:
    means: np.ndarray
    variances: np.ndarray
    snapshots: dict


def _moments(mu, D):
    return mu, np.var(D, axis=-1, ddof=1)


def _check_collapse(var, k, eps):
    bad = ~(var > eps)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise EnsembleCollapse(
            f"empirical variance {var[row]:.3g} <= {eps:g} at step {k} (row {row})"
        )


def _advance(m, s, mu, D, var, dz, dt, noise):
    sq = math.sqrt(dt)
    h = m.H
    G = np.asarray(s.G(var), dtype=float)
    drift = m.A * mu * dt + var * h * (dz - h * mu * dt)
    Dn = D + (G * dt)[:, None] * D
    j = 0
    if s.signal_noise:
        Dn += (np.asarray(s.r(var)) * sq)[:, None] * noise[:, j]
        j += 1
    if s.obs_noise:
        Dn += (np.asarray(s.q(var)) * sq)[:, None] * noise[:, j]
    c = Dn.mean(axis=-1)
    Dn -= c[:, None]
    return mu + drift + c, Dn


def run_enkf_batch(m: LinearGaussianModel, s: GainSchedule, dz, dt: float, particles0,
                   rngs: Sequence[np.random.Generator], snapshot_steps=(),
                   shared_noise: bool = False, collapse_eps: float = COLLAPSE_EPS,
                   on_snapshot=None) -> BatchResult:
    """Advance B independent ensembles over ``dz.shape[-1]`` steps.

    ``particles0`` is (B, N); ``dz`` is (B, n) or (n,) when all rows see the
    same observations. Row ``b`` draws noise from ``rngs[b]`` only, so its
    path does not depend on how rows are batched. With ``shared_noise`` one
    generator drives every row with identical normals (synchronous coupling).
    If ``on_snapshot`` is given it is called as ``on_snapshot(k, particles)``
    at each snapshot step instead of storing the (B, N) array.
    """
    x0 = np.atleast_2d(np.asarray(particles0, dtype=float))
    B, N = x0.shape
    if N < 2:
        raise BadSpec("ensembles need N >= 2")
    dz = np.broadcast_to(np.asarray(dz, dtype=float), (B, np.shape(dz)[-1]))
    n = dz.shape[-1]
    k_noise = _n_noise(s)
    if k_noise and len(rngs) < (1 if shared_noise else B):
        raise ValueError("one generator per row is required")
    noise_src = _NoiseBlocks(rngs, B, k_noise, N, shared_noise) if k_noise else None

    mu = x0.mean(axis=-1)
    D = x0 - mu[:, None]
    means = np.empty((B, n + 1))
    variances = np.empty((B, n + 1))
    want = set(int(k) for k in snapshot_steps)
    snaps = {}
    for k in range(n + 1):
        mu_k, var = _moments(mu, D)
        means[:, k] = mu_k
        variances[:, k] = var
        if k in want:
            if on_snapshot is None:
                snaps[k] = mu[:, None] + D
            else:
                on_snapshot(k, mu[:, None] + D)
        if k == n:
            break
        _check_collapse(var, k, collapse_eps)
        noise = noise_src.next() if noise_src is not None else None
        mu, D = _advance(m, s, mu, D, var, dz[:, k], dt, noise)
    return BatchResult(means, variances, snaps)


def step_ensemble(m: LinearGaussianModel, s: GainSchedule, e: Ensemble, dZ: float, dt: float,
                  rng=None, collapse_eps: float = COLLAPSE_EPS) -> Ensemble:
    """One explicit step with moments frozen at their pre-step values."""
    rng = np.random.default_rng(rng)
    x = e.particles[None, :]
    mu = x.mean(axis=-1)
    D = x - mu[:, None]
    var = np.var(D, axis=-1, ddof=1)
    _check_collapse(var, 0, collapse_eps)
    k = _n_noise(s)
    noise = rng.standard_normal((1, k, e.N)) if k else None
    mu, D = _advance(m, s, mu, D, var, np.array([dZ]), dt, noise)
    return Ensemble(e.t + dt, (mu[:, None] + D)[0])


def run_enkf(m: LinearGaussianModel, s: GainSchedule, obs: ObservationPath,
             init: InitialDistribution, N: int, rng=None, snapshot_times=()):
    """Run one ensemble along ``obs``.

    Returns the empirical moment path and a list of ``Ensemble`` snapshots at
    the grid points nearest to ``snapshot_times``.
    """
    rng = np.random.default_rng(rng)
    grid = obs.grid
    e0 = init_ensemble(init, N, rng)
    steps = [grid.index_of(t) for t in snapshot_times]
    res = run_enkf_batch(m, s, obs.increments, grid.dt, e0.particles[None, :], [rng], steps)
    path = MomentPath(grid, res.means[0], res.variances[0])
    times = grid.times
    snapshots = [Ensemble(float(times[k]), res.snapshots[k][0]) for k in steps]
    return path, snapshots


def write_snapshot(path, e: Ensemble) -> None:
    """One particle per line, 17 significant digits."""
    Path(path).write_text("".join(f"{x:.17g}\n" for x in e.particles))


def read_snapshot(path, t: float = 0.0) -> Ensemble:
    return Ensemble(t, np.array([float(line) for line in Path(path).read_text().split()]))
