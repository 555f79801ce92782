import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from slowosc.nonlinearity import (
    CATALOG,
    ConfigurationError,
    NonlinearitySpec,
    analysis_constants,
    atan_shifted,
    asymmetric_sine_clipped,
    central_difference,
    derivative_at_zero,
    evaluate,
    from_tag,
    linear,
    odd_sine_clipped,
    period_two_points,
    piecewise,
    ricker,
    validate,
)

ODD = odd_sine_clipped()
ATAN = atan_shifted()
ASYM = asymmetric_sine_clipped()


def test_catalog_values():
    assert evaluate(ATAN, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert evaluate(ODD, -10.0) == 3.0
    assert evaluate(ODD, 3.0) == pytest.approx(-3.0, abs=1e-15)
    assert evaluate(ODD, 10.0) == -3.0


def test_atan_formula():
    xs = np.linspace(-5, 5, 101)
    want = -2.0 * np.arctan(xs + math.tan(0.5)) + 1.0
    assert np.allclose(evaluate(ATAN, xs), want, atol=1e-15)


def test_evaluate_finite_everywhere():
    xs = np.array([-1e300, -1e6, -3.0, 0.0, 3.0, 1e6, 1e300])
    for f in (ATAN, ODD, ASYM):
        assert np.all(np.isfinite(evaluate(f, xs)))
    # Ricker grows like x e^{-x} below zero; finite down to the exp overflow point
    xs = np.array([-700.0, -1.0, 0.0, 2.0, 1e6, 1e300])
    assert np.all(np.isfinite(evaluate(ricker(math.e ** 2), xs)))


def test_derivative_at_zero_closed_forms():
    assert derivative_at_zero(ATAN) == pytest.approx(-2 * math.cos(0.5) ** 2, rel=1e-12)
    assert derivative_at_zero(ATAN) == pytest.approx(-1.5404, abs=1e-4)
    assert derivative_at_zero(ODD) == pytest.approx(-1 - math.pi, rel=1e-12)
    assert derivative_at_zero(linear(-2.7)) == -2.7


@pytest.mark.parametrize("f", [ATAN, ODD, ASYM])
def test_derivative_matches_central_differences(f):
    d = derivative_at_zero(f)
    for h in (1e-4, 1e-5):
        assert abs(central_difference(f, 0.0, h) - d) <= 1e-6 * abs(d)


def test_derivative_of_piecewise_by_richardson():
    f = piecewise((), [[("poly", (0.0, -3.0, 0.0, 0.2))]])
    assert derivative_at_zero(f) == pytest.approx(-3.0, rel=1e-8)


def test_validate_odd_sine():
    rep = validate(ODD)
    assert rep.passed
    assert rep.kappa1 == pytest.approx(-3.0, abs=1e-10)
    assert rep.kappa2 == pytest.approx(3.0, abs=1e-10)
    assert rep.hypotheses()["fprime0_below_minus_2"]


def test_validate_failures():
    rep = validate(linear(-0.5))
    assert not rep.passed and rep.fprime0 == -0.5
    rep = validate(linear(1.0), n_samples=101)
    assert not rep.negative_feedback_ok
    assert sum(1 for _, why in rep.violations if why == "x*f(x) >= 0") == 100


def test_atan_hypotheses_reported_not_enforced():
    rep = validate(ATAN)
    assert rep.passed
    assert not rep.hypotheses()["fprime0_below_minus_2"]


def test_period_two_odd_sine():
    pts = period_two_points(ODD)
    for want in (-3.0, 0.0, 3.0):
        assert min(abs(p - want) for p in pts) < 1e-9


def test_period_two_atan_against_brentq():
    pts = period_two_points(ATAN)
    g = lambda x: float(evaluate(ATAN, evaluate(ATAN, x))) - x  # noqa: E731
    xs = np.arange(-6.0, 6.0, 1e-3)
    vals = np.array([g(x) for x in xs])
    idx = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    oracle = [brentq(g, xs[i], xs[i + 1], xtol=1e-14) for i in idx]
    assert len(pts) == len(oracle) == 3
    assert np.allclose(pts, oracle, atol=1e-10)
    assert pts[0] < 0 < pts[2] and abs(pts[1]) < 1e-10


def test_period_two_contraction():
    pts = period_two_points(linear(-0.5))
    assert len(pts) == 1 and abs(pts[0]) < 1e-10


@pytest.mark.parametrize("f", [ATAN, ODD, ASYM])
def test_period_two_roots_are_roots(f):
    for r in period_two_points(f):
        assert abs(evaluate(f, evaluate(f, r)) - r) <= 10 * 1e-12 * max(1.0, abs(r)) + 1e-11


def test_analysis_constants_odd():
    a0, A0, R = analysis_constants(ODD)
    assert 3.0 < A0 < 3.01
    xs = np.linspace(-A0, A0, 200001)
    assert R == pytest.approx(np.max(np.abs(evaluate(ODD, xs))), rel=1e-6)
    assert R > 3.0
    assert 0 < a0 <= A0


def test_analysis_constants_linear_floor():
    _, A0, R = analysis_constants(linear(-0.5), R_floor=2.5)
    assert A0 < 1e-2
    assert R == 2.5


def test_analysis_constants_atan():
    _, A0, _ = analysis_constants(ATAN)
    q = period_two_points(ATAN)
    assert A0 >= max(abs(q[0]), q[-1]) - 1e-3


def test_from_tag():
    assert from_tag("odd-sine-clipped") == ODD
    assert from_tag("linear", slope=-3.0).params == (-3.0,)
    with pytest.raises(ConfigurationError):
        from_tag("linear")
    with pytest.raises(ConfigurationError):
        from_tag("nope")
    with pytest.raises(ConfigurationError):
        NonlinearitySpec("nope")
    assert set(CATALOG) >= {"atan-shifted", "ricker", "user-piecewise"}


def test_piecewise_reproduces_odd_sine():
    f = piecewise(
        (-3.0, 3.0),
        [[("const", 3.0)], [("poly", (0.0, -1.0)), ("sin", -3.0, math.pi / 3.0, 0.0)], [("const", -3.0)]],
    )
    xs = np.linspace(-9, 9, 1001)
    assert np.allclose(evaluate(f, xs), evaluate(ODD, xs), atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(-3.0, 3.0))
def test_odd_sine_is_odd(x):
    assert abs(evaluate(ODD, -x) + evaluate(ODD, x)) <= 1e-12


def test_odd_sine_is_odd_on_grid():
    xs = np.arange(-3000, 3001) * 1e-3
    assert np.max(np.abs(evaluate(ODD, -xs) + evaluate(ODD, xs))) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(["atan-shifted", "odd-sine-clipped", "asymmetric-sine-clipped"]),
    st.floats(1e-6, 10.0),
    st.sampled_from([-1.0, 1.0]),
)
def test_negative_feedback_property(tag, x, sign):
    f = from_tag(tag)
    assert sign * x * evaluate(f, sign * x) < 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(-8.0, -1.01))
def test_linear_derivative_property(a):
    assert derivative_at_zero(linear(a)) == a
