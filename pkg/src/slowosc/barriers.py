"""Eigenfunction barriers, membership in the invariant set and its convex chart."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .nonlinearity import ConfigurationError, derivative_at_zero, evaluate, analysis_constants
from .oscillation import zeros
from .roots import bisect
from .trajectory import Grid, InitialData, default_m, make_grid, simpson_weights


class BudgetError(ValueError):
    """The smallness conditions on (delta0, eps, alpha) cannot be met."""


class GenerationError(RuntimeError):
    """A generated candidate failed certification."""


class NotAMemberError(ValueError):
    pass


def phi0(tau, t):
    """Shifted principal eigenfunction ``sin(pi (t + 1 + tau))``."""
    return np.sin(np.pi * (np.asarray(t, dtype=float) + 1.0 + tau))


def sinc(x):
    return 1.0 if x == 0 else math.sin(x) / x


def lambda0(fprime0, eps):
    return -fprime0 * (2.0 / (math.pi * eps)) * math.sin(math.pi * eps / 2.0)


def eps0(fprime0, xtol=1e-15):
    """Smallest positive ``eps`` with ``sinc(pi eps / 2) = -2 / fprime0``."""
    if not fprime0 < -2.0:
        raise ConfigurationError(f"f'(0) = {fprime0} >= -2: no positive threshold exists")
    target = -2.0 / fprime0
    return bisect(lambda e: sinc(math.pi * e / 2.0) - target, 1e-300, 2.0, xtol=xtol)


def eigencheck(eps, fprime0, m):
    """Max nodewise defect of the discrete window operator on ``sin(pi t)``.

    The feedback is linear with slope ``fprime0``; the exact image of
    ``sin(pi t)`` is ``lambda0 * sin(pi t)``. Checked over ``t`` in [0, 2].
    """
    g = make_grid(eps, m)
    K = g.steps_per_unit
    n_hist = g.history_nodes
    idx = np.arange(-n_hist, 2 * K + 1)
    t = idx / K
    vals = fprime0 * np.sin(np.pi * t)
    w = simpson_weights(2 * g.m) * (g.dt / g.eps)
    # the window of node i >= 0 starts at array index i
    out_t = t[n_hist:]
    images = np.correlate(vals, w, mode="valid")[: out_t.size]
    lam = lambda0(fprime0, g.eps)
    return float(np.max(np.abs(images - lam * np.sin(np.pi * out_t))))


def smoothstep(a, b, t):
    """``0`` left of ``a``, ``1`` right of ``b``, cubic ``3s^2 - 2s^3`` between."""
    if not a < b:
        raise ValueError("smoothstep needs a < b")
    s = np.clip((np.asarray(t, dtype=float) - a) / (b - a), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


@dataclass(frozen=True)
class BarrierContext:
    eps: float
    alpha: float
    tau0: float
    delta0: float
    alpha0: float
    a0: float
    A0: float
    R: float
    lambda0: float
    fprime0: float
    grid: Grid | None = None

    def to_dict(self):
        d = asdict(self)
        d["grid"] = None if self.grid is None else self.grid.to_dict()
        return d

    @property
    def contraction(self):
        """``lambda0 (1 + delta0 / f'(0))``, required to be at least 2."""
        return self.lambda0 * (1.0 + self.delta0 / self.fprime0)

    def tolerance(self, dt):
        return 1e-9 * self.alpha + 2.0 * dt * (2.0 * self.R / self.eps)


def tau_star(eps, tau):
    return -0.5 - (eps / 4.0 + tau / 2.0)


def gamma_tau(ctx, tau, t):
    """Lower barrier on ``[-1 - eps/2, -tau]`` for offset ``tau``."""
    eps, alpha = ctx.eps, ctx.alpha
    t = np.asarray(t, dtype=float)
    if not 0.0 < tau <= eps * (1 + 1e-12):
        raise ValueError(f"tau={tau} outside (0, eps]")
    if np.any(t < -1.0 - eps / 2.0 - 1e-12) or np.any(t > -tau + 1e-12):
        raise ValueError("gamma_tau evaluated outside [-1 - eps/2, -tau]")
    if tau <= eps / 2.0:
        that = np.clip(-0.5 - t, tau, eps / 2.0)
        return alpha * np.sin(np.pi * (t + 1.0 + that))
    ts = tau_star(eps, tau)
    lo_sine = phi0(eps / 2.0, t)
    hi_sine = phi0(tau, t)
    mid = np.maximum(hi_sine, lo_sine)
    left = (1.0 - smoothstep(ts - eps, ts - eps / 2.0, t)) * lo_sine + smoothstep(ts - eps, ts - eps / 2.0, t) * hi_sine
    right = (1.0 - smoothstep(ts + eps / 2.0, ts + eps, t)) * lo_sine + smoothstep(ts + eps / 2.0, ts + eps, t) * hi_sine
    out = np.where(t < ts - eps / 2.0, left, np.where(t > ts + eps / 2.0, right, mid))
    return alpha * out


@dataclass(frozen=True)
class MembershipReport:
    member: bool
    in_invariant_set: bool
    tau: float
    worst_lower_violation: float
    worst_upper_violation: float
    tau_star: float | None
    tolerance: float
    norm: float
    reasons: tuple = ()


def _locate_tau(b):
    """Offsets of the sign changes in ``(0, eps]`` and any other stray zeros."""
    g = b.grid
    traj = b.as_trajectory()
    rec = zeros(traj, -1.0 - g.eps / 2.0, 0.0)
    left = -1.0 - g.eps / 2.0
    found, stray = [], []
    for t, s in zip(rec.times, rec.signs_after):
        if abs(t - left) < 1e-12:
            continue
        if -g.eps - 1e-12 <= t < 0.0:
            found.append((-t, s))
        else:
            stray.append((t, s))
    return found, stray


def membership(b, ctx):
    """Check the barrier inequalities for ``b`` and, additionally, ``tau >= tau0`` and ``||b|| <= R``."""
    g = b.grid
    if abs(g.eps - ctx.eps) > 1e-12:
        raise ValueError(f"data grid eps {g.eps} differs from context eps {ctx.eps}")
    tol = ctx.tolerance(g.dt)
    norm = b.norm()
    reasons = []
    if abs(b.samples[0]) > 1e-12:
        reasons.append(f"b(-1-eps/2) = {b.samples[0]:.3e} is not 0")
    found, _ = _locate_tau(b)
    if len(found) != 1 or found[0][1] >= 0:
        reasons.append(f"expected one descending zero in [-eps, 0), found {len(found)}")
        return MembershipReport(False, False, math.nan, math.inf, math.inf, None, tol, norm, tuple(reasons))
    tau = found[0][0]
    t = b.times
    left = t <= -tau
    lower = gamma_tau(ctx, tau, np.minimum(t[left], -tau))
    worst_lo = float(np.max(lower - b.samples[left])) if left.any() else 0.0
    upper = ctx.alpha * phi0(tau, t[~left])
    worst_hi = float(np.max(b.samples[~left] - upper)) if (~left).any() else 0.0
    if worst_lo > tol:
        reasons.append(f"below gamma_tau by {worst_lo:.3e}")
    if worst_hi > tol:
        reasons.append(f"above alpha*phi0^tau by {worst_hi:.3e}")
    member = not reasons
    inv = member
    if tau < ctx.tau0 - 1e-12:
        inv = False
        reasons.append(f"tau={tau:.6g} below tau0={ctx.tau0:.6g}")
    if norm > ctx.R + tol:
        inv = False
        reasons.append(f"norm {norm:.6g} exceeds R={ctx.R:.6g}")
    ts = tau_star(ctx.eps, tau) if tau > ctx.eps / 2.0 else None
    return MembershipReport(member, inv, float(tau), worst_lo, worst_hi, ts, tol, norm, tuple(reasons))


def h_tau(eps, tau, t):
    return t - (tau - eps / 2.0) * (t + 1.0 + eps / 2.0)


def h_tau_inv(eps, tau, s):
    return (s + (tau - eps / 2.0) * (1.0 + eps / 2.0)) / (1.0 - tau + eps / 2.0)


@dataclass(frozen=True, eq=False)
class SplitData:
    """Node samples of the two halves on ``[-1-eps/2, -eps/2]`` and ``[-eps/2, 0]``."""

    grid: Grid
    part1: np.ndarray
    part2: np.ndarray
    tau: float

    @property
    def t1(self):
        g = self.grid
        return (np.arange(self.part1.size) - g.history_nodes) * g.dt

    @property
    def t2(self):
        g = self.grid
        return (np.arange(self.part2.size) - g.m) * g.dt


def xi1(b, ctx):
    """Straighten ``b`` onto fixed subintervals; ``tau`` is carried alongside."""
    rep = membership(b, ctx)
    if not rep.member:
        raise NotAMemberError("xi1 needs a member: " + "; ".join(rep.reasons))
    g = b.grid
    eps, tau = g.eps, rep.tau
    n1 = g.history_nodes - g.m
    t1 = (np.arange(n1 + 1) - g.history_nodes) * g.dt
    t2 = (np.arange(g.m + 1) - g.m) * g.dt
    v1 = np.interp(h_tau(eps, tau, t1), b.times, b.samples)
    v2 = np.interp(2.0 * tau * t2 / eps, b.times, b.samples)
    v1[-1] = v2[0] = 0.0
    return SplitData(g, v1, v2, tau)


def xi1_inverse(split):
    g = split.grid
    eps, tau = g.eps, split.tau
    t = (np.arange(g.history_nodes + 1) - g.history_nodes) * g.dt
    out = np.empty_like(t)
    left = t <= -tau
    out[left] = np.interp(h_tau_inv(eps, tau, t[left]), split.t1, split.part1)
    out[~left] = np.interp(eps * t[~left] / (2.0 * tau), split.t2, split.part2)
    out[0] = 0.0
    return InitialData(g, out)


def _transported(split, ctx):
    eps, tau = split.grid.eps, split.tau
    g1 = gamma_tau(ctx, tau, np.clip(h_tau(eps, tau, split.t1), -1.0 - eps / 2.0, -tau))
    g2 = ctx.alpha * phi0(tau, 2.0 * tau * split.t2 / eps)
    return g1, g2


def xi2(split, ctx):
    """Subtract the transported barriers: the image satisfies ``w1 >= 0 >= w2``."""
    g1, g2 = _transported(split, ctx)
    return SplitData(split.grid, split.part1 - g1, split.part2 - g2, split.tau)


def xi2_inverse(split, ctx):
    g1, g2 = _transported(split, ctx)
    return SplitData(split.grid, split.part1 + g1, split.part2 + g2, split.tau)


def generate_initial(ctx, tau, amplitude_factor=1.5, seed=None, perturbation=0.25, grid=None):
    """Certified member of the invariant set with zero offset near ``tau``.

    The base shape is a stretched sine through ``-1-eps/2`` and ``-tau``;
    ``seed`` adds a smooth multiplicative perturbation with four Fourier
    modes. Barrier violations are clipped away nodewise and the result is
    certified by :func:`membership`.
    """
    grid = grid or ctx.grid
    if grid is None:
        raise ValueError("no grid: pass grid= or build the context with one")
    eps = grid.eps
    if not ctx.tau0 <= tau <= eps:
        raise ValueError(f"tau={tau} outside [tau0, eps]")
    if amplitude_factor < 1.0:
        raise ValueError("amplitude_factor must be >= 1")
    t = (np.arange(grid.history_nodes + 1) - grid.history_nodes) * grid.dt
    b = amplitude_factor * ctx.alpha * np.sin(np.pi * (t + 1.0 + eps / 2.0) / (1.0 + eps / 2.0 - tau))
    if seed is not None:
        rng = np.random.default_rng(seed)
        s = (t + 1.0 + eps / 2.0) / (1.0 + eps / 2.0)
        eta = np.zeros_like(t)
        for k in range(1, 5):
            eta += rng.uniform(-perturbation / k, perturbation / k) * np.sin(k * np.pi * s)
        b = b * (1.0 + eta)
    left = t <= -tau
    b[left] = np.maximum(b[left], gamma_tau(ctx, tau, t[left]))
    b[~left] = np.minimum(b[~left], ctx.alpha * phi0(tau, t[~left]))
    b = np.clip(b, -ctx.R, ctx.R)
    b[0] = 0.0
    data = InitialData(grid, b)
    rep = membership(data, ctx)
    if not rep.in_invariant_set:
        raise GenerationError("generated data not certified: " + "; ".join(rep.reasons))
    return data


def _alpha0(spec, fprime0, delta0, x_max, n=200001):
    """Largest grid radius on which ``f(x)/x <= f'(0) + delta0``."""
    xs = np.linspace(0.0, x_max, n)[1:]
    ok = (evaluate(spec, xs) / xs <= fprime0 + delta0) & (evaluate(spec, -xs) / -xs <= fprime0 + delta0)
    bad = np.nonzero(~ok)[0]
    if bad.size == 0:
        return float(xs[-1])
    if bad[0] == 0:
        raise BudgetError("slope bound fails arbitrarily close to 0")
    return float(xs[bad[0] - 1])


def budget(f_report, eps, R_floor=0.0, m=None):
    """Pick ``(delta0, alpha, tau0)`` satisfying the smallness conditions, each halved.

    ``eps`` may be a float (snapped on a grid with ``m`` or the default
    ``m``) or a :class:`Grid`.
    """
    spec = f_report.spec
    grid = eps if isinstance(eps, Grid) else make_grid(eps, m or default_m(eps))
    e = grid.eps
    fp = f_report.fprime0 if f_report.fprime0 is not None else derivative_at_zero(spec)
    if not fp < -2.0:
        raise BudgetError(f"f'(0) = {fp:.6g} >= -2: lambda0 (1 + delta0/f'(0)) >= 2 is impossible")
    lam = lambda0(fp, e)
    if lam <= 2.0:
        raise BudgetError(
            f"eps = {e:.6g} exceeds eps0 = {eps0(fp):.6g}: lambda0 = {lam:.6g} <= 2, no delta0 > 0 works"
        )
    delta0 = 0.5 * abs(fp) * (1.0 - 2.0 / lam)
    a0, A0, R = analysis_constants(spec, R_floor=R_floor)
    lo, hi = spec.eval_domain
    alpha0 = _alpha0(spec, fp, delta0, min(-lo, hi))
    alpha = 0.5 * min(alpha0, a0) / lam
    contraction = lam * (1.0 + delta0 / fp)
    tau0 = 0.5 * alpha * e * lam * math.sin(math.pi * e / 2.0) * (1.0 + delta0 / fp) / (2.0 * R)
    if not tau0 < e / 2.0:
        raise BudgetError(f"tau0 = {tau0:.6g} is not below eps/2")
    assert contraction >= 2.0
    return BarrierContext(
        eps=e,
        alpha=alpha,
        tau0=tau0,
        delta0=delta0,
        alpha0=alpha0,
        a0=a0,
        A0=A0,
        R=R,
        lambda0=lam,
        fprime0=fp,
        grid=grid,
    )
