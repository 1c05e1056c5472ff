import numpy as np
import pytest

from enkflab.errors import NonPositiveVariance
from enkflab.kalman import FilterState, kalman_gain, propagate_mean, run_kalman_bucy
from enkflab.metrics import fit_decay_rate
from enkflab.model import LinearGaussianModel, ObservationPath, TimeGrid, simulate_truth
from enkflab.riccati import constants, semigroup_phi


def test_gain(default_model):
    assert kalman_gain(FilterState(0.0, 2.5), default_model) == 2.5
    assert kalman_gain(FilterState(0.0, 2.5), LinearGaussianModel(0, -2.0, 1)) == -5.0


def test_state_rejects_nonpositive_variance():
    with pytest.raises(NonPositiveVariance):
        FilterState(0.0, 0.0)


def test_zero_innovation_step(default_model):
    # dZ = H m dt with A = 0 leaves the mean unchanged
    dt = 0.01
    out = propagate_mean(default_model, np.array([1.0]), np.array([1.0 * 3.0 * dt]), 3.0, dt)
    assert out[1] == pytest.approx(3.0, abs=1e-15)


def test_variance_ignores_observations():
    m = LinearGaussianModel(0.2, 1.4, 0.9)
    grid = TimeGrid(0.01, 400)
    _, z1 = simulate_truth(m, grid, rng=1)
    _, z2 = simulate_truth(m, grid, rng=2)
    a = run_kalman_bucy(m, z1, FilterState(0.0, 3.0))
    b = run_kalman_bucy(m, z2, FilterState(1.0, 3.0))
    assert np.array_equal(a.variances, b.variances)
    assert np.max(np.abs(a.variances - semigroup_phi(m, grid.times, 3.0))) < 1e-6


def test_batched_mean_equals_rowwise():
    m = LinearGaussianModel(-0.3, 1.0, 1.0)
    grid = TimeGrid(0.01, 100)
    paths = [simulate_truth(m, grid, rng=i)[1].increments for i in range(3)]
    var = run_kalman_bucy(m, ObservationPath(grid, paths[0]), FilterState(0, 1)).variances
    batch = propagate_mean(m, var, np.stack(paths), np.array([0.0, 1.0, 2.0]), grid.dt)
    for i, dz in enumerate(paths):
        row = propagate_mean(m, var, dz, float(i), grid.dt)
        assert np.array_equal(batch[i], row)


def _trials(m, grid, n, seed0=0):
    errs = []
    for i in range(n):
        x, z = simulate_truth(m, grid, rng=np.random.default_rng([seed0, i]))
        path = run_kalman_bucy(m, z, FilterState(m.m0, m.Sigma0))
        errs.append(path.means - x.values)
    return np.array(errs), path


def test_stationary_error_matches_riccati(default_model):
    grid = TimeGrid(0.01, 2000)
    errs, path = _trials(default_model, grid, 200)
    late = grid.times >= 5.0
    mse = np.mean(errs[:, late] ** 2)
    assert abs(mse - constants(default_model).sigma_inf) < 0.10


def test_filter_is_unbiased():
    m = LinearGaussianModel(-0.5, 1.2, 0.8, m0=1.0, Sigma0=2.0)
    grid = TimeGrid(0.01, 300)
    errs, path = _trials(m, grid, 1000, seed0=5)
    for t in (0.5, 1.0, 3.0):
        k = grid.index_of(t)
        e = errs[:, k]
        se = e.std(ddof=1) / np.sqrt(len(e))
        assert abs(e.mean()) < 3 * se
        # error variance matches the filter variance
        assert abs(e.var(ddof=1) / path.variances[k] - 1) < 0.15


def test_exponential_forgetting(default_model):
    grid = TimeGrid(0.01, 800)
    _, z = simulate_truth(default_model, grid, rng=9)
    a = run_kalman_bucy(default_model, z, FilterState(10.0, 1.5))
    b = run_kalman_bucy(default_model, z, FilterState(0.0, 1.0))
    gap = np.abs(a.means - b.means)
    fit = fit_decay_rate(grid.times, gap, (1.0, 8.0))
    assert fit.rate >= 0.85 * constants(default_model).lambda0
