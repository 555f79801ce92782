"""Zero crossings and slow-oscillation checks, plus the first-return map built on them."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .nonlinearity import evaluate
from .trajectory import InitialData, Trajectory, derivative, extend, window_integral

log = logging.getLogger(__name__)

ZERO_SNAP = 1e-14
DEGENERATE_SUP = 1e-10
COLLAPSE_GUARD = 1e-4


class DivergenceError(RuntimeError):
    """The continuation has no ascending zero where one must exist."""


class ConvergenceError(RuntimeError):
    """Fixed-point iteration of the return map did not settle."""

    def __init__(self, message, history, last=None):
        super().__init__(message)
        self.history = list(history)
        self.last = last


@dataclass(frozen=True)
class ZeroRecord:
    times: tuple = ()
    signs_after: tuple = ()

    @property
    def gaps(self):
        return tuple(float(b - a) for a, b in zip(self.times, self.times[1:]))

    def __len__(self):
        return len(self.times)

    def ascending(self):
        return tuple(t for t, s in zip(self.times, self.signs_after) if s > 0)

    def descending(self):
        return tuple(t for t, s in zip(self.times, self.signs_after) if s < 0)


@dataclass(frozen=True)
class OscillationVerdict:
    slowly_oscillating: bool
    min_gap: float
    failures: tuple = ()
    zero_count: int = 0
    degenerate: bool = False
    zeros: ZeroRecord = field(default_factory=ZeroRecord)


def _node_sequence(traj, t_from, t_to):
    """Nodes of ``traj`` in ``[t_from, t_to]``; the jump at 0 becomes two entries."""
    K = traj.grid.steps_per_unit
    lo = max(int(math.ceil(t_from * K - 1e-9)), traj.offset)
    hi = min(int(math.floor(t_to * K + 1e-9)), traj.offset + traj.samples.size - 1)
    if hi < lo:
        return np.empty(0), np.empty(0)
    idx = np.arange(lo, hi + 1)
    xs = traj.samples[idx - traj.offset]
    ts = idx / K
    if traj.jump_at_zero is not None and lo < 0 <= hi:
        p = -lo
        ts = np.insert(ts, p, 0.0)
        xs = np.insert(xs, p, traj.jump_at_zero[0])
    return ts, xs


def zeros(traj, t_from, t_to):
    """Sign changes and touching zeros of the node samples on ``[t_from, t_to]``.

    Crossings between opposite-signed neighbours are placed by linear
    interpolation. A run of nodes with ``|x| <= 1e-14`` counts as a single
    zero at its first node; if the sign is the same on both sides the zero
    is recorded with that sign, which breaks alternation downstream.
    """
    ts, xs = _node_sequence(traj, t_from, t_to)
    if ts.size == 0:
        return ZeroRecord()
    s = np.sign(np.where(np.abs(xs) <= ZERO_SNAP, 0.0, xs)).astype(int)
    times, signs = [], []
    nz = np.nonzero(s)[0]
    if nz.size == 0:
        return ZeroRecord()
    # leading zero run: sign after is the first nonzero sign
    if nz[0] > 0:
        times.append(float(ts[0]))
        signs.append(int(s[nz[0]]))
    for a, b in zip(nz, nz[1:]):
        if b == a + 1:
            if s[a] != s[b]:
                xa, xb = xs[a], xs[b]
                if ts[a] == ts[b]:
                    tc = float(ts[a])
                else:
                    tc = float(ts[a] + (ts[b] - ts[a]) * xa / (xa - xb))
                times.append(tc)
                signs.append(int(s[b]))
        else:
            times.append(float(ts[a + 1]))
            signs.append(int(s[b]))
    return ZeroRecord(tuple(times), tuple(signs))


def classify(traj, eps, window, gap_tolerance=None):
    """Slow-oscillation verdict on ``window`` (length from 0, or a ``(lo, hi)`` pair)."""
    lo, hi = (0.0, float(window)) if np.isscalar(window) else map(float, window)
    if hi - lo < 3.0 - 1e-12:
        raise ValueError("classification window must have length >= 3")
    if gap_tolerance is None:
        gap_tolerance = 2.0 * traj.grid.dt
    rec = zeros(traj, lo, hi)
    _, xs = _node_sequence(traj, lo, hi)
    degenerate = xs.size == 0 or float(np.max(np.abs(xs))) <= ZERO_SNAP
    failures = []
    bound = 1.0 - eps / 2.0 - gap_tolerance
    for (a, b), g in zip(zip(rec.times, rec.times[1:]), rec.gaps):
        if g < bound:
            failures.append(((a, b), f"gap {g:.6g} < {bound:.6g}"))
    for i in range(1, len(rec)):
        if rec.signs_after[i] == rec.signs_after[i - 1]:
            failures.append(((rec.times[i - 1], rec.times[i]), "signs do not alternate"))
    min_gap = min(rec.gaps) if len(rec) > 1 else math.inf
    return OscillationVerdict(
        slowly_oscillating=not failures,
        min_gap=float(min_gap),
        failures=tuple(failures),
        zero_count=len(rec),
        degenerate=degenerate,
        zeros=rec,
    )


def _lerp(traj, s):
    """Linear interpolation of the continuation (right limit at 0) at times ``s``."""
    u = np.asarray(s, dtype=float) * traj.grid.steps_per_unit - traj.offset
    k = np.clip(np.floor(u + 1e-9).astype(int), 0, traj.samples.size - 2)
    frac = u - k
    frac = np.where(np.abs(frac) < 1e-9, 0.0, frac)
    lo = traj.samples[k]
    hi = traj.samples[k + 1]
    return lo + frac * (hi - lo)


def first_ascending_zero(traj, after=0.0, upto=None):
    """First zero in ``(after, upto]`` where the sign turns positive."""
    upto = traj.t_end if upto is None else upto
    rec = zeros(traj, after, upto)
    for t, s in zip(rec.times, rec.signs_after):
        if t > after and s > 0:
            return t
    return None


def _continue_past_return(b, f):
    """Continuation long enough to cover ``[z1, z1 + 1 + eps/2]``."""
    g = b.grid
    half = g.eps / 2.0
    for horizon, zmax in ((2.0 + g.eps, 1.0 + half), (4.0 + g.eps, 3.0)):
        traj = extend(b, f, horizon)
        z1 = first_ascending_zero(traj, 0.0, zmax)
        if z1 is not None:
            return traj, z1
    raise DivergenceError("no ascending zero of the continuation in (0, 3]")


def poincare(b, f, context=None):
    """Return map ``t -> x_b(z1 + 1 + eps/2 + t)`` resampled on the history nodes.

    ``context`` is accepted for interface symmetry with the barrier tools
    and is not needed for the map itself.
    """
    traj, z1 = _continue_past_return(b, f)
    g = b.grid
    s = z1 + 1.0 + g.eps / 2.0 + b.times
    seg = _lerp(traj, s)
    seg[0] = 0.0
    return InitialData(g, seg), float(z1)


def one_sided_slopes_at_z1(b, f, context=None):
    """``(left, right)`` derivatives of the continuation at its first ascending zero."""
    traj, z1 = _continue_past_return(b, f)
    d = derivative(traj, f, z1)
    if isinstance(d, tuple):
        return d
    return d, d


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    """Converged fixed point of the return map and one period of its continuation.

    ``one_period`` holds the continuation nodes covering ``[z1, z3]``;
    :meth:`evaluate` reads the orbit at times measured from the ascending
    zero ``z1`` and wraps modulo the period.
    """

    segment: InitialData
    continuation: Trajectory | None
    one_period: Trajectory | None
    period: float
    residual: float
    extremes: tuple
    tau: float
    iterations: int
    z1: float = math.nan
    z2: float = math.nan
    z3: float = math.nan
    degenerate: bool = False
    closure_defect: float = math.nan
    history: tuple = ()
    slowly_oscillating: bool = False

    def evaluate(self, t):
        if self.degenerate:
            return np.zeros_like(np.asarray(t, dtype=float))
        t = np.asarray(t, dtype=float)
        return _lerp(self.continuation, self.z1 + np.mod(t, self.period))

    def at(self, t):
        """Periodic extension in the continuation's own time frame."""
        return self.evaluate(np.asarray(t, dtype=float) - self.z1)

    def zeros(self):
        """The ascending and descending zero of one period."""
        return (self.z1, self.z2)

    def summary(self):
        g = self.segment.grid
        return {
            "eps": g.eps,
            "period": None if self.degenerate else self.period,
            "residual": self.residual,
            "extremes": list(self.extremes),
            "iterations": self.iterations,
            "tau": None if self.degenerate else self.tau,
            "degenerate": self.degenerate,
            "closure_defect": None if self.degenerate else self.closure_defect,
            "slowly_oscillating": self.slowly_oscillating,
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def to_csv(self, path):
        self.one_period.to_csv(path)


def _anderson_step(xs, gs, depth):
    """Anderson mixing on the last ``depth`` iterates (type II, no damping)."""
    fs = [g - x for x, g in zip(xs, gs)]
    if len(fs) < 2:
        return gs[-1]
    k = min(depth, len(fs) - 1)
    dF = np.array([fs[-i] - fs[-i - 1] for i in range(1, k + 1)]).T
    dG = np.array([gs[-i] - gs[-i - 1] for i in range(1, k + 1)]).T
    gamma, *_ = np.linalg.lstsq(dF, fs[-1], rcond=None)
    return gs[-1] - dG @ gamma


def _equation_defect(traj, f, t_lo, t_hi):
    g = traj.grid
    K = g.steps_per_unit
    i0 = int(math.ceil(t_lo * K - 1e-9))
    i1 = int(math.floor(t_hi * K + 1e-9))
    worst = 0.0
    for i in range(i0, i1 + 1):
        t = i / K
        worst = max(worst, abs(window_integral(traj, f, t) - traj.value(t)))
    return worst


def find_periodic(b0, f, context=None, tol=1e-8, max_iter=500, anderson=0):
    """Iterate the return map from ``b0`` until consecutive segments agree to ``tol``.

    ``anderson > 0`` mixes the last ``anderson`` iterates (accepted only
    when the mixed iterate still lies in C0 and reduces the step). The
    returned orbit's ``residual`` is the larger of the last fixed-point
    step and the nodewise defect of the window equation over one period.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = b0.grid
    b = b0
    history = []
    xs, gs = [], []
    for it in range(1, max_iter + 1):
        if float(np.max(np.abs(b.samples))) < DEGENERATE_SUP:
            return _degenerate(b, it - 1, history)
        nb, _ = poincare(b, f, context)
        dist = float(np.max(np.abs(nb.samples - b.samples)))
        history.append(dist)
        log.debug("iteration %d: step %.3e", it, dist)
        if float(np.max(np.abs(nb.samples))) < DEGENERATE_SUP:
            return _degenerate(nb, it, history)
        # a tiny segment that barely moves is still collapsing; keep going
        if dist < tol and float(np.max(np.abs(nb.samples))) > COLLAPSE_GUARD:
            return _assemble(nb, f, it, history)
        if anderson:
            xs.append(b.samples.copy())
            gs.append(nb.samples.copy())
            xs, gs = xs[-(anderson + 1):], gs[-(anderson + 1):]
            cand = _anderson_step(xs, gs, anderson)
            cand[0] = 0.0
            if np.all(np.isfinite(cand)):
                nb = InitialData(g, cand)
        b = nb
    raise ConvergenceError(
        f"return map did not converge in {max_iter} iterations (last step {history[-1]:.3e})",
        history,
        last=b,
    )


def _degenerate(b, iterations, history):
    return PeriodicOrbit(
        segment=b,
        continuation=None,
        one_period=None,
        period=math.nan,
        residual=float(np.max(np.abs(b.samples))),
        extremes=(float(np.min(b.samples)), float(np.max(b.samples))),
        tau=math.nan,
        iterations=iterations,
        degenerate=True,
        history=tuple(history),
    )


def _assemble(b, f, iterations, history):
    g = b.grid
    eps = g.eps
    # continuation long enough to see z1, z2, z3 and close a period
    traj = extend(b, f, _node_ceil(g, 5.0 + 2 * eps))
    rec = zeros(traj, 0.0, traj.t_end)
    asc = [t for t, s in zip(rec.times, rec.signs_after) if s > 0 and t > 0]
    if len(asc) < 2:
        raise DivergenceError("periodic candidate lacks two ascending zeros")
    z1, z3 = asc[0], asc[1]
    desc = [t for t, s in zip(rec.times, rec.signs_after) if s < 0 and z1 < t < z3]
    if not desc:
        raise DivergenceError("no descending zero between consecutive returns")
    z2 = desc[0]
    one = traj.slice(_node_floor(g, z1), _node_ceil(g, z3))
    inner = one.samples[1:-1] if one.samples.size > 2 else one.samples
    extremes = (float(np.min(inner)), float(np.max(inner)))
    again, _ = poincare(b, f)
    fp = float(np.max(np.abs(again.samples - b.samples)))
    defect = _equation_defect(traj, f, 0.0, _node_ceil(g, z3))
    closure = abs(traj.samples[g.history_nodes] - b.samples[-1])
    verdict = classify(traj, eps, (0.0, traj.t_end))
    return PeriodicOrbit(
        segment=b,
        continuation=traj,
        one_period=one,
        period=float(z3 - z1),
        residual=max(fp, defect),
        extremes=extremes,
        tau=float(z1 + 1.0 + eps / 2.0 - z2),
        iterations=iterations,
        z1=float(z1),
        z2=float(z2),
        z3=float(z3),
        closure_defect=float(closure),
        history=tuple(history),
        slowly_oscillating=verdict.slowly_oscillating and verdict.zero_count > 0,
    )


def _node_ceil(g, t):
    return math.ceil(t * g.steps_per_unit - 1e-9) / g.steps_per_unit


def _node_floor(g, t):
    return math.floor(t * g.steps_per_unit + 1e-9) / g.steps_per_unit
