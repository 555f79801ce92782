"""Age-structured population model reduced to the window equation.

With the uniform weighted kernel ``gamma(a) exp(-mu a) = 1/eps`` on
``[1 - eps/2, 1 + eps/2]`` the birth-rate problem becomes the window
equation for ``zeta = B - kappa`` with feedback ``F(z) = f(z + kappa) - kappa``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .barriers import eps0
from .nonlinearity import NonlinearitySpec, derivative_at_zero, evaluate, golden_argmax
from .oscillation import find_periodic
from .roots import bisect
from .trajectory import DomainError, InitialData, Trajectory, default_m, extend, make_grid, simpson_weights

log = logging.getLogger(__name__)


class HypothesisWarning(UserWarning):
    """A hypothesis of the periodic-orbit result does not hold."""


def kappa_fixed_point(f, bracket=(1e-6, 50.0), xtol=1e-15):
    """Positive root of ``f(x) = x`` inside ``bracket`` by bisection."""
    lo, hi = bracket
    return bisect(lambda x: evaluate(f, x) - x, lo, hi, xtol=xtol)


def unimodal_peak(f, lo=0.0, hi=None):
    """``(argmax, max)`` of ``f`` on ``[lo, hi]`` (grid scan refined by golden section)."""
    hi = f.eval_domain[1] if hi is None else hi
    xs = np.linspace(lo, hi, 20001)
    k = int(np.argmax(evaluate(f, xs)))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
    return golden_argmax(lambda v: evaluate(f, v), a, b)


def x_star_point(f, kappa):
    """The unique ``x < kappa`` on the rising branch with ``f(x) = kappa``."""
    peak, _ = unimodal_peak(f, 0.0, kappa)
    return bisect(lambda x: evaluate(f, x) - kappa, 0.0, peak, xtol=1e-15)


@dataclass(frozen=True)
class GurtinConfig:
    f: NonlinearitySpec
    mu: float
    eps: float
    kappa: float
    x_star: float
    x_clamp: float
    f_sup: float
    hypothesis_holds: bool

    @classmethod
    def build(cls, f, mu=0.0, eps=0.3, x_clamp=None):
        """Resolve ``kappa``, ``x_star`` and the clamp point.

        The clamp point defaults to the midpoint of ``(x_star, f(||f||))``.
        When that interval is empty the hypothesis ``f(||f||) > x_star``
        fails; the clamp then defaults to ``x_star + 0.05 (peak - x_star)``,
        just inside the negative-feedback range, and a
        :class:`HypothesisWarning` is issued. Whether the clamp binds along
        the computed orbit is reported by :func:`asymptotic_demo`.
        """
        if mu < 0:
            raise ValueError("mu must be non-negative")
        kappa = kappa_fixed_point(f)
        xs = x_star_point(f, kappa)
        peak, f_sup = unimodal_peak(f)
        floor = float(evaluate(f, f_sup))
        holds = floor > xs
        if x_clamp is None:
            x_clamp = 0.5 * (xs + floor) if holds else xs + 0.05 * (peak - xs)
        if not holds:
            warnings.warn(
                f"f(||f||) = {floor:.4g} <= x_* = {xs:.4g}: no admissible clamp, using x_clamp = {x_clamp:.4g}",
                HypothesisWarning,
                stacklevel=2,
            )
        if not xs < x_clamp < kappa:
            raise ValueError(f"x_clamp={x_clamp} must lie in (x_*={xs}, kappa={kappa})")
        return cls(f, float(mu), float(eps), float(kappa), float(xs), float(x_clamp), float(f_sup), bool(holds))

    def to_dict(self):
        return {
            "f": self.f.describe(),
            "mu": self.mu,
            "eps": self.eps,
            "kappa": self.kappa,
            "x_star": self.x_star,
            "x_clamp": self.x_clamp,
            "f_sup": self.f_sup,
            "hypothesis_holds": self.hypothesis_holds,
            "kernel": "gamma(a)*exp(-mu*a) = 1/eps on [1-eps/2, 1+eps/2]",
        }


def shift_clamp(f, kappa, x_clamp):
    """``F(z) = f(z + kappa) - kappa`` above ``x_clamp - kappa``, constant below."""
    lo, hi = f.eval_domain
    F = NonlinearitySpec(
        "shifted-clamped",
        params=(float(kappa), float(x_clamp)),
        eval_domain=(min(lo - kappa, -1.0), hi - kappa),
        base=f,
    )
    slope = derivative_at_zero(F)
    if slope >= -1.0:
        warnings.warn(f"F'(0) = {slope:.4g} >= -1: feedback too weak for oscillation", HypothesisWarning, stacklevel=2)
    return F


def kernel_check(mu, eps, gamma=None, m=None, support=None):
    """Simpson value of ``int gamma(a) exp(-mu a) da``; 1 for a normalized kernel.

    ``gamma`` defaults to the uniform weighted kernel ``exp(mu a)/eps`` on
    the window. ``support`` is the integration interval (window by default).
    """
    g = make_grid(eps, m or default_m(eps))
    lo, hi = support or (1.0 - g.eps / 2.0, 1.0 + g.eps / 2.0)
    K = g.steps_per_unit
    i0, i1 = round(lo * K), round(hi * K)
    a = np.arange(i0, i1 + 1) / K
    if gamma is None:
        vals = np.exp(mu * a) / g.eps * np.exp(-mu * a)
    else:
        vals = np.asarray(gamma(a), dtype=float) * np.exp(-mu * a)
    return float(g.dt * np.dot(simpson_weights(i1 - i0), vals))


def reconstruct_density(b, u0, mu, age_max, t):
    """Age profile ``u(t, a)`` on the nodes ``a = 0, dt, ..., age_max``.

    ``b`` is a birth-rate trajectory covering ``[0, t]`` (``[t - age_max, t]``
    suffices once ``t >= age_max``); ``u0`` is either a callable or samples
    on the same age nodes.
    """
    g = b.grid
    K = g.steps_per_unit
    n = int(round(age_max * K))
    ages = np.arange(n + 1) / K
    if t > b.t_end + 1e-12:
        raise DomainError(f"t={t} beyond the birth-rate horizon {b.t_end}")
    out = np.empty_like(ages)
    young = ages < t - 1e-12
    if young.any():
        s = t - ages[young]
        if s.min() < b.t0 - 1e-12:
            raise DomainError("birth rate does not reach back far enough")
        out[young] = np.exp(-mu * ages[young]) * np.array([b.interp(x) for x in s])
    old = ~young
    if old.any():
        shifted = ages[old] - t
        if callable(u0):
            base = np.asarray(u0(shifted), dtype=float)
        else:
            u0 = np.asarray(u0, dtype=float)
            base = np.interp(shifted, ages[: u0.size], u0)
        out[old] = math.exp(-mu * t) * base
    return ages, out


@dataclass(frozen=True, eq=False)
class GurtinResult:
    orbit: object
    F: NonlinearitySpec
    birth: Trajectory
    total: Trajectory
    b_residual: float
    clamp_active: bool
    min_B: float
    snapshots: tuple
    orbit_claimed: bool = True

    def summary(self):
        return {
            "orbit_claimed": self.orbit_claimed,
            "period": self.orbit.period,
            "orbit_residual": self.orbit.residual,
            "b_residual": self.b_residual,
            "clamp_active": self.clamp_active,
            "min_B": self.min_B,
            "birth_min": float(np.min(self.birth.samples)),
            "birth_max": float(np.max(self.birth.samples)),
            "iterations": self.orbit.iterations,
        }


def asymptotic_demo(cfg, horizon=None, snapshot_times=None, age_max=3.0, m=None, tol=1e-10, max_iter=500,
                    initial=1.0, anderson=5):
    """Periodic birth rate of the reduced model and density snapshots along it.

    The orbit is found for ``F`` from constant data ``initial`` with
    Anderson mixing (plain iteration of the return map tends to lock onto
    fast oscillations or wander for large Ricker parameters). Its
    fixed-point segment is continued to ``horizon``; ``B = zeta + kappa``
    and ``b = f(B)`` are tabulated there and the window equation for ``B``
    is re-checked with the original ``f`` wherever the window lies in
    ``t >= 0``.
    """
    F = shift_clamp(cfg.f, cfg.kappa, cfg.x_clamp)
    fp = derivative_at_zero(F)
    claimed = True
    if fp >= -2.0:
        claimed = False
        warnings.warn(f"f'(kappa) = {fp:.4g} >= -2: no periodic orbit is claimed", HypothesisWarning, stacklevel=2)
    elif cfg.eps > eps0(fp):
        claimed = False
        warnings.warn(f"eps = {cfg.eps} exceeds eps0 = {eps0(fp):.4g}", HypothesisWarning, stacklevel=2)
    g = make_grid(cfg.eps, m or default_m(cfg.eps))
    orbit = find_periodic(InitialData.constant(g, initial), F, tol=tol, max_iter=max_iter, anderson=anderson)
    if orbit.degenerate:
        raise ValueError("orbit collapsed to the equilibrium")
    if horizon is None:
        horizon = math.ceil(age_max + 2.0 * orbit.period)
    horizon = math.ceil(horizon * g.steps_per_unit - 1e-9) / g.steps_per_unit
    zeta = extend(orbit.segment, F, horizon)
    k = cfg.kappa
    jz = zeta.jump_at_zero
    total = Trajectory(g, zeta.offset, zeta.samples + k, (jz[0] + k, jz[1] + k))
    birth = Trajectory(
        g, zeta.offset, evaluate(cfg.f, total.samples),
        (evaluate(cfg.f, jz[0] + k), evaluate(cfg.f, jz[1] + k)),
    )
    # window of node i starts at array index i; check nodes t >= 1 + eps/2
    w = simpson_weights(2 * g.m) * (g.dt / g.eps)
    images = np.correlate(birth.samples, w, mode="valid")
    n_hist = g.history_nodes
    first = n_hist
    last = total.samples.size - 1 - n_hist
    lhs = total.samples[n_hist + first:n_hist + last + 1]
    eq_defect = float(np.max(np.abs(images[first:last + 1] - lhs)))
    min_B = min(float(np.min(total.samples)), jz[0] + k)
    clamp_active = min_B <= cfg.x_clamp
    if snapshot_times is None:
        snapshot_times = (horizon - orbit.period / 2.0, horizon)
    u0 = lambda a: k * np.exp(-cfg.mu * a)  # noqa: E731
    snaps = []
    for t in snapshot_times:
        t = round(t * g.steps_per_unit) / g.steps_per_unit
        snaps.append((t,) + reconstruct_density(birth, u0, cfg.mu, age_max, t))
    return GurtinResult(
        orbit, F, birth, total, max(eq_defect, orbit.residual), clamp_active, min_B, tuple(snaps), claimed
    )
