import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enkflab.kalman import MomentPath
from enkflab.meanfield import (
    GainSchedule,
    VariantId,
    asymptotic_rate,
    blended_schedule,
    check_constraint,
    gaussian_gap_factor,
    preset,
)
from enkflab.model import LinearGaussianModel, TimeGrid
from enkflab.riccati import constants, integrate_riccati, ricc

PRESETS = (VariantId.P_ENKF, VariantId.S_ENKF, VariantId.D_ENKF)

models = st.builds(
    LinearGaussianModel,
    A=st.floats(-2.0, 2.0),
    H=st.floats(0.3, 2.0) | st.floats(-2.0, -0.3),
    sigma_B=st.floats(0.3, 2.0),
)


@pytest.mark.parametrize("v,G,r,q", [
    ("p-enkf", -1.0, 1.0, 1.0),
    ("s-enkf", -0.5, 1.0, 0.0),
    ("d-enkf", 0.0, 0.0, 0.0),
])
def test_presets_default(default_model, v, G, r, q):
    s = preset(v, default_model)
    assert (float(s.G(1.0)), float(s.r(1.0)), float(s.q(1.0))) == (G, r, q)
    assert check_constraint(s, default_model, 1.0) == 0.0


def test_presets_second_model():
    m = LinearGaussianModel(0.5, 2.0, 1.0)
    p, s, d = (preset(v, m) for v in PRESETS)
    assert float(p.G(0.5)) == pytest.approx(0.5 - 0.5 * 4)
    assert float(s.G(0.5)) == pytest.approx(0.5 - 0.25 * 4)
    assert float(d.G(0.5)) == pytest.approx(0.5 - 0.25 * 4 + 0.5 / 0.5 * 0.5 * 2)
    for sch in (p, s, d):
        assert abs(check_constraint(sch, m, 0.5)) < 1e-14


def test_variant_parse():
    assert VariantId.parse("P_ENKF") is VariantId.P_ENKF
    assert VariantId.parse("d-enkf") is VariantId.D_ENKF
    assert [v.code for v in VariantId] == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        VariantId.parse("x-enkf")
    with pytest.raises(ValueError):
        preset("custom", LinearGaussianModel(0, 1, 1))


def test_uncorrected_d_drift_violates_exactness(default_model):
    # G = A - S*H^2/2 with r = q = 0 misses Sigma_B entirely
    naive = GainSchedule("naive", lambda S: default_model.A - 0.5 * np.asarray(S) * default_model.H ** 2,
                         signal_noise=False, obs_noise=False)
    assert check_constraint(naive, default_model, 1.0) == pytest.approx(-1.0)


@settings(max_examples=100, deadline=None)
@given(models, st.floats(0.05, 8.0))
def test_exactness_residual_vanishes(m, xs):
    S = xs * constants(m).sigma_inf
    scale = max(1.0, m.Sigma_B, abs(m.A) * S, m.H ** 2 * S * S)
    for v in PRESETS:
        assert abs(check_constraint(preset(v, m), m, S)) < 1e-10 * scale


def test_residual_vectorized_random_sweep():
    rng = np.random.default_rng(1)
    m = LinearGaussianModel(0.7, -1.3, 0.4)
    S = rng.uniform(0.01, 10.0, 1000)
    for v in PRESETS:
        assert np.max(np.abs(check_constraint(preset(v, m), m, S))) < 1e-10 * np.max(S) ** 2


@settings(max_examples=100, deadline=None)
@given(models, st.floats(0.05, 8.0))
def test_gain_ordering(m, xs):
    S = xs * constants(m).sigma_inf
    p, s, d = (preset(v, m) for v in PRESETS)
    stoch = [float(x.r(S)) ** 2 + float(x.q(S)) ** 2 for x in (p, s, d)]
    assert stoch[0] > stoch[1] > stoch[2] == 0
    assert float(p.G(S)) < float(s.G(S)) < float(d.G(S))
    assert float(d.G(S)) == pytest.approx(ricc(m, S) / (2 * S), rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("a,b", [(1, 1), (1, 0), (0, 0), (0.5, 0.5), (0.3, 0.9)])
def test_blended_is_exact(a, b):
    m = LinearGaussianModel(-0.4, 1.1, 0.9)
    s = blended_schedule(m, a, b)
    S = np.linspace(0.05, 5, 50)
    assert np.max(np.abs(check_constraint(s, m, S))) < 1e-12


@pytest.mark.parametrize("a,b,v", [(1, 1, "p-enkf"), (1, 0, "s-enkf"), (0, 0, "d-enkf")])
def test_blended_endpoints_reproduce_presets(a, b, v):
    m = LinearGaussianModel(0.3, 1.7, 0.6)
    S = np.linspace(0.1, 3, 20)
    bl, pr = blended_schedule(m, a, b), preset(v, m)
    for f in ("G", "r", "q"):
        assert np.allclose(getattr(bl, f)(S), getattr(pr, f)(S), rtol=1e-13, atol=1e-15)
    assert (bl.signal_noise, bl.obs_noise) == (pr.signal_noise, pr.obs_noise)


def test_custom_gain_default_model(default_model):
    s = blended_schedule(default_model, 0.5, 0.5)
    assert float(s.r(1.0)) == 0.5 and float(s.q(1.0)) == 0.5
    assert float(s.G(1.0)) == pytest.approx(-0.25)


def _stationary(m, n=1000, dt=0.01):
    grid = TimeGrid(dt, n)
    return MomentPath(grid, np.zeros(n + 1), integrate_riccati(m, constants(m).sigma_inf, grid))


@pytest.mark.parametrize("v,rate", [("p-enkf", 1.0), ("s-enkf", 0.5), ("d-enkf", 0.0)])
def test_gap_factor_at_stationarity(default_model, v, rate):
    path = _stationary(default_model)
    f = gaussian_gap_factor(preset(v, default_model), path)
    assert f[0] == 1.0
    assert np.allclose(f, np.exp(-rate * path.times), rtol=1e-10)
    assert asymptotic_rate(preset(v, default_model), default_model) == rate


def test_asymptotic_rates_match_constants():
    m = LinearGaussianModel(0.5, 2.0, 1.0)
    c = constants(m)
    assert asymptotic_rate(preset("p-enkf", m), m) == pytest.approx(c.lambda0, rel=1e-12)
    assert asymptotic_rate(preset("s-enkf", m), m) == pytest.approx(c.lambda1, rel=1e-12)
    assert asymptotic_rate(preset("d-enkf", m), m) == pytest.approx(0.0, abs=1e-12)


def test_d_factor_is_variance_ratio():
    """For the deterministic schedule exp(int G) = sqrt(S_t/S_0)."""
    m = LinearGaussianModel(0.0, 1.0, 1.0)
    grid = TimeGrid(0.01, 1000)
    for S0 in (3.0, 0.25):
        path = MomentPath(grid, np.zeros(1001), integrate_riccati(m, S0, grid))
        f = gaussian_gap_factor(preset("d-enkf", m), path)
        assert np.max(np.abs(f - np.sqrt(path.variances / S0))) < 1e-4
        assert f[-1] == pytest.approx(math.sqrt(1 / S0), rel=1e-4)
