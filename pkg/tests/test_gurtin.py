import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from slowosc.gurtin import (
    GurtinConfig,
    HypothesisWarning,
    asymptotic_demo,
    kappa_fixed_point,
    kernel_check,
    reconstruct_density,
    shift_clamp,
    unimodal_peak,
    x_star_point,
)
from slowosc.nonlinearity import derivative_at_zero, evaluate, ricker
from slowosc.trajectory import Trajectory, make_grid, window_integral


@pytest.mark.parametrize("alpha,kappa", [(math.e, 1.0), (math.e**2, 2.0)])
def test_kappa_examples(alpha, kappa):
    assert abs(kappa_fixed_point(ricker(alpha)) - kappa) <= 1e-12


def test_kappa_generic_residual():
    f = ricker(10.0)
    k = kappa_fixed_point(f)
    assert abs(evaluate(f, k) - k) <= 1e-12
    assert k == pytest.approx(math.log(10.0), abs=1e-12)


def test_peak_and_x_star():
    f = ricker(math.exp(3.1))
    x, fx = unimodal_peak(f)
    assert x == pytest.approx(1.0, abs=1e-8)
    assert fx == pytest.approx(math.exp(3.1 - 1.0), rel=1e-12)
    k = kappa_fixed_point(f)
    xs = x_star_point(f, k)
    assert xs < 1.0 and abs(evaluate(f, xs) - k) <= 1e-10


def test_shift_clamp_examples():
    f = ricker(math.e**3)
    k = kappa_fixed_point(f)
    assert k == pytest.approx(3.0, abs=1e-12)
    with pytest.warns(HypothesisWarning):
        GurtinConfig.build(f, eps=0.3)
    xc = 0.5
    F = shift_clamp(f, k, xc)
    assert evaluate(F, 0.0) == pytest.approx(0.0, abs=1e-14)
    assert derivative_at_zero(F) == pytest.approx(-2.0, abs=1e-8)
    below = np.linspace(-10, xc - k, 7)
    assert np.all(evaluate(F, below) == evaluate(f, xc) - k)
    z = 1.3
    assert evaluate(F, z) == pytest.approx(evaluate(f, z + k) - k, abs=1e-14)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(0.01, 0.9))
def test_kernel_normalized(mu, eps):
    assert abs(kernel_check(mu, eps) - 1.0) <= 1e-12


def test_kernel_halving_and_user_kernel():
    assert kernel_check(0.7, 0.3) == pytest.approx(kernel_check(0.7, 0.15), abs=1e-14)
    mu, eps = 0.4, 0.3
    gamma = lambda a: np.exp(mu * a) * (1.0 + (a - 1.0)) / eps  # noqa: E731
    want = quad(lambda a: (1.0 + (a - 1.0)) / eps, 1 - eps / 2, 1 + eps / 2)[0]
    assert kernel_check(mu, eps, gamma=gamma) == pytest.approx(want, abs=1e-12)
    assert kernel_check(mu, eps, gamma=lambda a: 2 * np.exp(mu * a) / eps) == pytest.approx(2.0, abs=1e-12)


def test_reconstruct_density_basic():
    g = make_grid(0.3, 12)
    n = 8 * g.steps_per_unit
    b = Trajectory(g, 0, np.full(n + 1, 1.7))
    u0 = lambda a: 2.0 + np.sin(a)  # noqa: E731
    ages, u = reconstruct_density(b, u0, 0.3, 3.0, 0.0)
    assert np.allclose(u, u0(ages), atol=1e-15)
    ages, u = reconstruct_density(b, u0, 0.0, 3.0, 5.0)
    assert np.allclose(u, 1.7, atol=1e-15)


@pytest.fixture(scope="module")
def demo():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        cfg = GurtinConfig.build(ricker(math.exp(3.1)), mu=0.4, eps=0.3)
        return cfg, asymptotic_demo(cfg)


def test_demo_birth_rate(demo):
    cfg, res = demo
    assert res.orbit_claimed
    assert res.b_residual <= 1e-8
    assert np.all(res.birth.samples > 0.0)
    assert 1.7 < res.orbit.period < 2.3
    assert not res.clamp_active and res.min_B > cfg.x_clamp


def test_demo_conjugacy_and_residual(demo):
    cfg, res = demo
    g = res.total.grid
    zeta = res.orbit.continuation
    n = min(zeta.samples.size, res.total.samples.size)
    assert np.max(np.abs(res.total.samples[:n] - cfg.kappa - zeta.samples[:n])) <= 1e-12
    t0 = math.ceil((1 + g.eps / 2) * g.steps_per_unit)
    worst = max(
        abs(window_integral(res.total, cfg.f, k * g.dt) - res.total.value(k * g.dt))
        for k in range(t0, int(res.total.t_end * g.steps_per_unit) + 1, 5)
    )
    assert worst <= 1e-8


def test_demo_density_snapshots(demo):
    cfg, res = demo
    for t, ages, u in res.snapshots:
        assert np.all(u >= 0.0)
        young = ages < t
        want = np.array([res.birth.interp(t - a) for a in ages[young]])
        assert np.allclose(u[young] * np.exp(cfg.mu * ages[young]), want, atol=1e-13)


def test_config_invariants(demo):
    cfg, _ = demo
    assert abs(evaluate(cfg.f, cfg.kappa) - cfg.kappa) <= 1e-10
    assert abs(evaluate(cfg.f, cfg.x_star) - cfg.kappa) <= 1e-10
    assert cfg.x_star < cfg.x_clamp < cfg.kappa
    # for this Ricker parameter the interval (x_*, f(||f||)) is empty
    assert not cfg.hypothesis_holds


def test_weak_feedback_warns_and_claims_nothing():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        cfg = GurtinConfig.build(ricker(math.exp(2.5)), eps=0.3)
    with pytest.warns(HypothesisWarning, match="no periodic orbit is claimed"):
        res = asymptotic_demo(cfg)
    assert not res.orbit_claimed
    assert not res.summary()["orbit_claimed"]


def test_build_rejects_bad_clamp():
    with pytest.raises(ValueError), pytest.warns(HypothesisWarning):
        GurtinConfig.build(ricker(math.exp(3.1)), x_clamp=10.0)
    with pytest.raises(ValueError):
        GurtinConfig.build(ricker(math.exp(3.1)), mu=-1.0)
