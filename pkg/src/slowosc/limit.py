"""Small-eps behaviour: square-wave comparison of periodic orbits."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .nonlinearity import period_two_points
from .oscillation import ConvergenceError, DivergenceError, find_periodic
from .trajectory import InitialData, Trajectory, default_m, make_grid, write_csv

log = logging.getLogger(__name__)

DEFAULT_INTERVALS = ((0.25, 0.75), (1.25, 1.75))


def square_wave(kappa0, t, levels=None):
    """Low level when ``floor(t)`` is even, high level when odd.

    ``levels=(low, high)`` overrides the symmetric pair ``(-kappa0, kappa0)``.
    """
    low, high = (-kappa0, kappa0) if levels is None else levels
    odd = np.mod(np.floor(np.asarray(t, dtype=float)), 2.0) == 1.0
    return np.where(odd, high, low)


def lambda_ak(a, k, eps):
    return -(2.0 * a / (k * math.pi * eps)) * math.sin(k * math.pi * eps / 2.0)


def plateau_levels(f):
    """``(low, high)``: the extreme nontrivial period-two points of ``f``."""
    pts = [p for p in period_two_points(f) if abs(p) > 1e-9]
    if len(pts) < 2:
        raise ValueError("f has no nontrivial period-two pair")
    return min(pts), max(pts)


def _node_times(grid, lo, hi):
    K = grid.steps_per_unit
    return np.arange(math.ceil(lo * K - 1e-9), math.floor(hi * K + 1e-9) + 1) / K


def l1_error(traj, levels):
    """``int_0^2 |y - b*|`` with the jump of ``b*`` at 1 split out exactly."""
    low, high = levels
    total = 0.0
    for (a, b), c in (((0.0, 1.0), low), ((1.0, 2.0), high)):
        ts = _node_times(traj.grid, a, b)
        y = np.array([traj.value(t) for t in ts])
        total += float(np.trapezoid(np.abs(y - c), ts))
    return total


def sup_error(traj, levels, interval):
    ts = _node_times(traj.grid, *interval)
    y = np.array([traj.value(t) for t in ts])
    return float(np.max(np.abs(y - square_wave(0.0, ts, levels))))


def align_phase(orbit, kappa0=None, levels=None):
    """Shift ``orbit`` so it best matches the square wave on ``[0, 2]``.

    The two candidates put either the ascending or the descending zero at
    ``t = 0``; the one with smaller L1 distance wins. Returns the aligned
    samples on ``[0, 2]`` and the shift (in the continuation's time frame,
    reduced modulo the period).
    """
    if orbit.degenerate:
        raise ValueError("degenerate orbit has no zero to align")
    if levels is None:
        if kappa0 is None:
            raise ValueError("give kappa0 or levels")
        levels = (-kappa0, kappa0)
    g = orbit.segment.grid
    ts = _node_times(g, 0.0, 2.0)
    rec = orbit.zeros()
    best = None
    for z in rec:
        y = orbit.at(z + ts)
        traj = Trajectory(g, 0, y)
        err = l1_error(traj, levels)
        if best is None or err < best[0]:
            best = (err, traj, float(np.mod(z, orbit.period)))
    return best[1], best[2]


@dataclass(frozen=True)
class LimitSweepRow:
    eps: float
    period: float
    sup_error_on_I: float
    l1_error: float
    overshoot: float
    undershoot: float
    converged: bool = True
    iterations: int = 0
    residual: float = math.nan
    m: int = 0
    message: str = ""

    def csv_row(self):
        return (self.eps, self.period, self.sup_error_on_I, self.l1_error, self.overshoot, self.undershoot)


SWEEP_HEADER = ("eps", "period", "sup_error", "l1_error", "overshoot", "undershoot")


def default_ctx_builder(eps, m=None):
    g = make_grid(eps, m or default_m(eps))
    return g, InitialData.constant(g, 1.0)


def _row(args):
    f, eps, interval, levels, ctx_builder, tol, max_iter = args
    g, b0 = ctx_builder(eps)
    try:
        orbit = find_periodic(b0, f, tol=tol, max_iter=max_iter)
    except (ConvergenceError, DivergenceError) as exc:
        log.warning("eps=%s: %s", eps, exc)
        nan = math.nan
        return LimitSweepRow(g.eps, nan, nan, nan, nan, nan, converged=False, m=g.m, message=str(exc)), None
    if orbit.degenerate:
        nan = math.nan
        return LimitSweepRow(g.eps, nan, nan, nan, nan, nan, converged=False, m=g.m, message="degenerate"), orbit
    aligned, _ = align_phase(orbit, levels=levels)
    lo, hi = orbit.extremes
    row = LimitSweepRow(
        eps=g.eps,
        period=orbit.period,
        sup_error_on_I=sup_error(aligned, levels, interval),
        l1_error=l1_error(aligned, levels),
        overshoot=hi - levels[1],
        undershoot=lo - levels[0],
        iterations=orbit.iterations,
        residual=orbit.residual,
        m=g.m,
    )
    return row, orbit


def sweep(f, eps_list, interval=(1.25, 1.75), ctx_builder=None, tol=1e-8, max_iter=500, workers=None,
          levels=None):
    """One row per ``eps``: the orbit search followed by square-wave errors of the aligned orbit.

    Returns ``(rows, orbits)``; a row that failed to converge carries NaNs
    and ``converged=False``.
    """
    eps_list = list(eps_list)
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    lo, hi = interval
    if not (0.0 < lo <= hi < 1.0 or 1.0 < lo <= hi < 2.0):
        raise ValueError("interval must lie inside (0, 1) or (1, 2)")
    levels = levels or plateau_levels(f)
    builder = ctx_builder or default_ctx_builder
    jobs = [(f, e, interval, levels, builder, tol, max_iter) for e in eps_list]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(_row, jobs))
    else:
        out = [_row(j) for j in jobs]
    return [r for r, _ in out], [o for _, o in out]


def monotone_with_slack(values, rel=0.05, allowed=1, floor=1e-9):
    """Non-increasing up to ``allowed`` inversions of relative size ``<= rel``.

    Increases below ``floor`` in absolute terms are treated as ties.
    """
    vals = [v for v in values if np.isfinite(v)]
    inversions = 0
    for a, b in zip(vals, vals[1:]):
        if b <= a + floor:
            continue
        if b <= a * (1.0 + rel):
            inversions += 1
        else:
            return False
    return inversions <= allowed


def write_sweep_csv(path, rows):
    write_csv(path, SWEEP_HEADER, [r.csv_row() for r in rows])
