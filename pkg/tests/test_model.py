import math

import numpy as np
import pytest

from enkflab.errors import DegenerateModel, StepTooLarge
from enkflab.model import LinearGaussianModel, ObservationPath, TimeGrid, simulate_truth, validate_model


@pytest.mark.parametrize("params", [(0, 1, 1, 1), (-1, 2, 0.5, 0.3)])
def test_validate_accepts(params):
    A, H, sb, S0 = params
    m = LinearGaussianModel(A, H, sb, 0.0, S0)
    assert validate_model(m) is m


@pytest.mark.parametrize("params", [(0, 0, 1, 1), (0, 1, 0, 1), (0, 1, 1, 0), (0, 1, 1, -2)])
def test_validate_rejects(params):
    A, H, sb, S0 = params
    with pytest.raises(DegenerateModel, match="Assumption II"):
        validate_model(LinearGaussianModel(A, H, sb, 0.0, S0))


def test_sigma_b_squared():
    assert LinearGaussianModel(0, 1, 0.3).Sigma_B == 0.3 * 0.3


def test_grid():
    g = TimeGrid.from_horizon(0.01, 1.0)
    assert g.n_steps == 100
    assert g.times[0] == 0 and math.isclose(g.times[-1], 1.0)
    assert g.index_of(0.5) == 50
    with pytest.raises(ValueError):
        TimeGrid(0.0, 10)
    with pytest.raises(ValueError):
        g.index_of(2.0)


def test_noiseless_zero_drift_is_constant():
    m = LinearGaussianModel(0.0, 1.0, 0.0, m0=1.0, Sigma0=0.0)
    x, z = simulate_truth(m, TimeGrid(0.01, 50), rng=3, check=False)
    assert np.all(x.values == 1.0)
    assert len(z.increments) == 50


def test_noiseless_decay_matches_exponential():
    m = LinearGaussianModel(-1.0, 1.0, 0.0, m0=1.0, Sigma0=0.0)
    dt = 0.01
    x, _ = simulate_truth(m, TimeGrid(dt, 100), rng=0, check=False)
    exact = math.exp(-1.0)
    assert abs(x.values[-1] - exact) / exact < 10 * dt
    t = TimeGrid(dt, 100).times
    assert np.all(np.abs(x.values - np.exp(-t)) / np.exp(-t) < 10 * dt)


def test_validation_is_enforced_by_default():
    with pytest.raises(DegenerateModel):
        simulate_truth(LinearGaussianModel(0, 1, 0.0), TimeGrid(0.01, 10), rng=0)


def test_step_too_large():
    with pytest.raises(StepTooLarge):
        simulate_truth(LinearGaussianModel(-50.0, 1, 1), TimeGrid(0.1, 10), rng=0)


def test_same_seed_bit_identical():
    m = LinearGaussianModel(0.3, 1.2, 0.7, 0.5, 2.0)
    g = TimeGrid(0.01, 300)
    a = simulate_truth(m, g, rng=11)
    b = simulate_truth(m, g, rng=11)
    assert np.array_equal(a[0].values, b[0].values)
    assert np.array_equal(a[1].increments, b[1].increments)
    c = simulate_truth(m, g, rng=12)
    assert not np.array_equal(a[1].increments, c[1].increments)


def test_observation_increments_consistent():
    m = LinearGaussianModel(0.0, 2.0, 1.0)
    g = TimeGrid(0.01, 200)
    rng = np.random.default_rng(4)
    x, z = simulate_truth(m, g, rng=4)
    # replay the documented draw order
    x0 = rng.standard_normal()
    rng.standard_normal(200)
    eta = rng.standard_normal(200)
    assert x.values[0] == x0
    assert np.allclose(z.increments, 2.0 * x.values[:-1] * 0.01 + 0.1 * eta, rtol=0, atol=1e-15)
    assert np.allclose(z.cumulative[1:], np.cumsum(z.increments))


def test_path_length_validation():
    with pytest.raises(ValueError):
        ObservationPath(TimeGrid(0.1, 5), np.zeros(4))


def test_variance_moment_monte_carlo():
    """A = 0: Var[X_T] = Sigma0 + Sigma_B*T."""
    m = LinearGaussianModel(0.0, 1.0, 0.8, m0=0.5, Sigma0=1.5)
    g = TimeGrid(0.02, 50)
    xs = np.array([simulate_truth(m, g, rng=np.random.default_rng([7, i]))[0].values[-1] for i in range(10_000)])
    expected = 1.5 + 0.64 * 1.0
    assert abs(xs.var(ddof=1) - expected) / expected < 0.05
