import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowosc.barriers import lambda0
from slowosc.limit import (
    align_phase,
    l1_error,
    lambda_ak,
    monotone_with_slack,
    plateau_levels,
    square_wave,
    sup_error,
    sweep,
    write_sweep_csv,
)
from slowosc.nonlinearity import atan_shifted, odd_sine_clipped, period_two_points
from slowosc.trajectory import Trajectory, make_grid

ATAN = atan_shifted()
ODD = odd_sine_clipped()
EPS = [0.3, 0.1, 0.03, 0.01]


def test_square_wave_examples():
    assert square_wave(3, 1.5) == 3
    assert square_wave(3, 0.5) == -3
    assert square_wave(3, 2.5) == -3
    assert square_wave(0, 1.5, levels=(-1.0, 2.0)) == 2.0


def test_lambda_ak_examples():
    assert lambda_ak(-2.5, 1, 0.25) == pytest.approx(lambda0(-2.5, 0.25), rel=1e-15)
    assert lambda_ak(-1.7, 2, 1e-9) == pytest.approx(1.7, rel=1e-12)
    with mpmath.workdps(40):
        want = float(-(2 * mpmath.mpf("-1.2") / (mpmath.mpf("0.3") * mpmath.pi)) * mpmath.sin(mpmath.mpf("0.15") * mpmath.pi))
    assert lambda_ak(-1.2, 3, 0.1) == pytest.approx(want, rel=1e-14)


def test_plateau_levels():
    assert plateau_levels(ODD) == pytest.approx((-3.0, 3.0), abs=1e-9)
    q = period_two_points(ATAN)
    assert plateau_levels(ATAN) == pytest.approx((q[0], q[-1]))


def _traj(g, func):
    t = np.arange(0, 2 * g.steps_per_unit + 1) / g.steps_per_unit
    return Trajectory(g, 0, func(t))


def test_error_norms_on_known_inputs():
    g = make_grid(0.1, 10)
    levels = (-1.0, 2.0)
    exact = _traj(g, lambda t: square_wave(0, t, levels))
    # the sampled wave takes the next plateau's value at t = 1 and t = 2, so
    # each half picks up one trapezoid end weight of size 3 * dt / 2
    assert l1_error(exact, levels) == pytest.approx(3.0 * g.dt, abs=1e-14)
    zero = _traj(g, np.zeros_like)
    assert l1_error(zero, levels) == pytest.approx(3.0, abs=1e-14)
    assert sup_error(zero, levels, (1.25, 1.75)) == 2.0
    assert sup_error(zero, levels, (0.25, 0.75)) == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=2, max_size=8))
def test_monotone_nonincreasing_sequences_pass(vals):
    assert monotone_with_slack(sorted(vals, reverse=True))


def test_monotone_with_slack():
    assert monotone_with_slack([1.0, 0.5, 0.51, 0.2])
    assert not monotone_with_slack([1.0, 0.5, 0.6])
    assert not monotone_with_slack([1.0, 0.5, 0.51, 0.3, 0.31])
    assert monotone_with_slack([1e-14, 3e-14, 2e-14])


@pytest.fixture(scope="module")
def sweeps():
    return {name: sweep(f, EPS) for name, f in (("atan", ATAN), ("odd", ODD))}


@pytest.mark.parametrize("name", ["atan", "odd"])
def test_sweep_monotone(sweeps, name):
    rows, _ = sweeps[name]
    assert all(r.converged for r in rows)
    assert [r.eps for r in rows] == pytest.approx(EPS)
    assert monotone_with_slack([r.sup_error_on_I for r in rows])
    assert monotone_with_slack([r.l1_error for r in rows])
    for r in rows:
        assert 2 - r.eps < r.period < 2 + r.eps
        assert all(math.isfinite(v) for v in r.csv_row())


def test_odd_sine_gibbs(sweeps):
    rows, _ = sweeps["odd"]
    assert all(r.overshoot > 0 for r in rows)
    assert rows[-1].overshoot >= 0.01 * 3.0


def test_atan_overshoot_vanishes(sweeps):
    rows, orbits = sweeps["atan"]
    q = period_two_points(ATAN)
    assert abs(rows[-1].overshoot) <= 0.005 * q[-1]
    assert rows[-1].l1_error < rows[0].l1_error
    big = max(abs(q[0]), abs(q[-1]))
    assert abs(max(abs(v) for v in orbits[-1].extremes) - big) <= 0.02 * big


def test_align_phase_properties(sweeps):
    _, orbits = sweeps["odd"]
    o = orbits[0]
    levels = plateau_levels(ODD)
    aligned, shift = align_phase(o, levels=levels)
    t = aligned.times
    assert np.allclose(aligned.samples, o.at(shift + t), atol=1e-14)
    z1, z2 = o.zeros()
    cands = [np.mod(z1, o.period), np.mod(z2, o.period)]
    assert min(abs(shift - c) for c in cands) < 1e-12
    # the candidates sit half a period apart for the odd feedback
    gap = np.mod(cands[1] - cands[0], o.period)
    assert gap == pytest.approx(o.period / 2, abs=5 * o.segment.grid.dt)
    other = cands[1] if abs(shift - cands[0]) < 1e-12 else cands[0]
    alt = Trajectory(aligned.grid, 0, o.at(other + t))
    assert l1_error(aligned, levels) <= l1_error(alt, levels)
    with pytest.raises(ValueError):
        align_phase(o)


def test_sweep_argument_checks():
    with pytest.raises(ValueError):
        sweep(ATAN, [0.1, 0.3])
    with pytest.raises(ValueError):
        sweep(ATAN, [0.3], interval=(0.5, 1.5))


def test_sweep_parallel_matches_serial(tmp_path):
    serial, _ = sweep(ATAN, [0.3, 0.1])
    parallel, _ = sweep(ATAN, [0.3, 0.1], workers=2)
    assert [r.csv_row() for r in serial] == [r.csv_row() for r in parallel]
    write_sweep_csv(tmp_path / "s.csv", serial)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "eps,period,sup_error,l1_error,overshoot,undershoot"
    assert len(lines) == 3
