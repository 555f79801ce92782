"""Commensurate time grid and the forward continuation by Simpson window quadrature.

Everything lives on a uniform grid whose spacing ``dt = eps / (2 m)``
divides 1, so ``eps/2`` and ``1 +- eps/2`` are grid nodes and the
delay window ``[t - 1 - eps/2, t - 1 + eps/2]`` always spans exactly ``2m``
subintervals. Node ``k`` of a trajectory sits at ``(offset + k) * dt``
where ``offset`` is an integer, so time bookkeeping is done in integers.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .nonlinearity import evaluate


class DomainError(ValueError):
    """A requested time lies outside the stored samples."""


class NonFiniteError(ArithmeticError):
    def __init__(self, message, t):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True)
class Grid:
    """Commensurate grid: ``eps = 2m/K`` and ``dt = 1/K``."""

    m: int
    steps_per_unit: int
    eps_requested: float | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be a positive integer")
        if self.steps_per_unit < 2 * self.m + 1:
            raise ValueError("grid would force eps >= 1")

    @property
    def eps(self):
        return 2 * self.m / self.steps_per_unit

    @property
    def eps_fraction(self):
        return Fraction(2 * self.m, self.steps_per_unit)

    @property
    def dt(self):
        return 1.0 / self.steps_per_unit

    @property
    def history_nodes(self):
        """Index distance from ``-1 - eps/2`` to ``0``."""
        return self.steps_per_unit + self.m

    @property
    def snap_distance(self):
        if self.eps_requested is None:
            return 0.0
        return abs(self.eps - self.eps_requested)

    def index(self, t):
        """Integer node index of time ``t`` (must be a node)."""
        k = round(t * self.steps_per_unit)
        if abs(t * self.steps_per_unit - k) > 1e-7:
            raise DomainError(f"t={t!r} is not a grid node (dt=1/{self.steps_per_unit})")
        return int(k)

    def to_dict(self):
        return {
            "eps": self.eps,
            "eps_requested": self.eps_requested,
            "eps_fraction": str(self.eps_fraction),
            "m": self.m,
            "dt": self.dt,
            "steps_per_unit": self.steps_per_unit,
        }


def make_grid(eps_requested, m):
    """Grid whose ``eps = 2m/K`` with ``K`` the integer nearest ``2m/eps_requested``."""
    if not 0.0 < eps_requested < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    m = int(m)
    K = int(round(2 * m / eps_requested))
    if K < 2 * m + 1:
        raise ValueError(f"m={m} cannot represent eps={eps_requested} below 1")
    return Grid(m=m, steps_per_unit=K, eps_requested=float(eps_requested))


def default_m(eps):
    """Default half-window subinterval count.

    ``m = 10`` for ``eps >= 0.1``, moved up to the first ``m`` that makes
    ``2m/eps`` an integer when one exists below 60; for smaller ``eps`` the
    smallest ``m`` giving ``dt <= 1/400``.
    """
    if eps >= 0.1:
        for m in range(10, 61):
            ratio = 2 * m / eps
            if abs(ratio - round(ratio)) < 1e-9:
                return m
        return 10
    return max(1, math.ceil(200 * eps - 1e-9))


def simpson_weights(n):
    """Weights ``w`` with ``integral ~ h * sum(w * y)`` over ``n`` subintervals.

    Composite Simpson for even ``n``; odd ``n >= 3`` closes with the 3/8
    rule on the last three subintervals; ``n == 1`` is the trapezoid.
    """
    if n < 1:
        raise ValueError("need at least one subinterval")
    w = np.zeros(n + 1)
    if n == 1:
        w[:] = 0.5
        return w
    n13 = n if n % 2 == 0 else n - 3
    if n13 > 0:
        w[0:n13 + 1:2] += 2.0 / 3.0
        w[1:n13:2] += 4.0 / 3.0
        w[0] -= 1.0 / 3.0
        w[n13] -= 1.0 / 3.0
    if n13 != n:
        w[n13:n + 1] += np.array([3.0, 9.0, 9.0, 3.0]) / 8.0
    return w


@dataclass(frozen=True, eq=False)
class InitialData:
    """Samples of ``b`` on the nodes of ``[-1 - eps/2, 0]``."""

    grid: Grid
    samples: np.ndarray
    continuity: bool = True

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != (self.grid.history_nodes + 1,):
            raise ValueError(
                f"initial data needs {self.grid.history_nodes + 1} samples, got {s.shape}"
            )
        if not np.all(np.isfinite(s)):
            raise ValueError("initial data must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def times(self):
        return (np.arange(self.samples.size) - self.grid.history_nodes) * self.grid.dt

    @property
    def in_C0(self):
        return self.samples[0] == 0.0

    def norm(self):
        return float(np.max(np.abs(self.samples)))

    @classmethod
    def constant(cls, grid, value):
        return cls(grid, np.full(grid.history_nodes + 1, float(value)))

    @classmethod
    def from_function(cls, grid, func):
        t = (np.arange(grid.history_nodes + 1) - grid.history_nodes) * grid.dt
        return cls(grid, np.asarray(func(t), dtype=float))

    def as_trajectory(self):
        return Trajectory(self.grid, -self.grid.history_nodes, self.samples)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Node samples ``x((offset + k) dt)`` of a continuation.

    When the samples straddle ``t = 0`` of a continuation, ``samples`` holds
    the right limit ``x_b(0)`` and ``jump_at_zero = (b(0), x_b(0))``.
    """

    grid: Grid
    offset: int
    samples: np.ndarray
    jump_at_zero: tuple | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def t0(self):
        return self.offset * self.grid.dt

    @property
    def t_end(self):
        return (self.offset + self.samples.size - 1) * self.grid.dt

    @property
    def times(self):
        return (self.offset + np.arange(self.samples.size)) * self.grid.dt

    def position(self, t):
        """Array position of node ``t``."""
        k = self.grid.index(t) - self.offset
        if not 0 <= k < self.samples.size:
            raise DomainError(f"t={t} outside [{self.t0}, {self.t_end}]")
        return k

    def value(self, t, side="right"):
        """Sample at node ``t``; ``side='left'`` returns ``b(0)`` at the jump."""
        k = self.position(t)
        if side == "left" and self.jump_at_zero is not None and k + self.offset == 0:
            return float(self.jump_at_zero[0])
        return float(self.samples[k])

    def interp(self, t, side="right"):
        """Linear interpolation at arbitrary ``t`` (left/right limit at the jump)."""
        u = t * self.grid.steps_per_unit - self.offset
        if u < -1e-9 or u > self.samples.size - 1 + 1e-9:
            raise DomainError(f"t={t} outside [{self.t0}, {self.t_end}]")
        k = int(math.floor(u + 1e-12))
        frac = u - k
        if abs(frac) < 1e-9:
            return self.value((k + self.offset) * self.grid.dt, side=side)
        k = min(max(k, 0), self.samples.size - 2)
        frac = u - k
        lo = self.samples[k]
        if self.jump_at_zero is not None and k + 1 + self.offset == 0:
            hi = self.jump_at_zero[0]
        else:
            hi = self.samples[k + 1]
        return float(lo + frac * (hi - lo))

    def slice(self, t_from, t_to):
        i = self.position(t_from)
        j = self.position(t_to)
        jump = self.jump_at_zero if (self.offset + i) < 0 <= (self.offset + j) else None
        if jump is not None and self.offset + i == 0:
            jump = None
        return Trajectory(self.grid, self.offset + i, self.samples[i:j + 1].copy(), jump)

    def segment(self, t_end):
        """The initial-data window ``[t_end - 1 - eps/2, t_end]`` as :class:`InitialData`."""
        j = self.position(t_end)
        i = j - self.grid.history_nodes
        if i < 0:
            raise DomainError("segment starts before the trajectory")
        return InitialData(self.grid, self.samples[i:j + 1].copy())

    def rows(self):
        """``(t, x)`` rows; the jump at 0 is emitted as two rows with equal t."""
        times = self.times
        out = []
        for k, (t, x) in enumerate(zip(times, self.samples)):
            if self.jump_at_zero is not None and k + self.offset == 0:
                out.append((0.0, float(self.jump_at_zero[0])))
                out.append((0.0, float(x)))
            else:
                out.append((float(t), float(x)))
        return out

    def to_csv(self, path):
        write_csv(path, ("t", "x"), self.rows())


def fmt(v):
    """17 significant digits, locale independent."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if v is None:
        return ""
    return format(float(v), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_trajectory_csv(path, grid):
    """Read ``t,x`` rows written by :meth:`Trajectory.to_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if [h.strip() for h in header] != ["t", "x"]:
            raise ValueError(f"{path}: expected header t,x")
        rows = [(float(a), float(b)) for a, b in r]
    jump = None
    ts, xs = [], []
    for i, (t, x) in enumerate(rows):
        if i + 1 < len(rows) and rows[i + 1][0] == t:
            jump = (x, rows[i + 1][1])
            continue
        ts.append(t)
        xs.append(x)
    offset = grid.index(ts[0])
    expect = (offset + np.arange(len(ts))) * grid.dt
    if np.max(np.abs(np.asarray(ts) - expect)) > 1e-9:
        raise ValueError(f"{path}: rows are not consecutive nodes of the grid")
    return Trajectory(grid, offset, np.asarray(xs), jump)


def _window_values(fvals, start, n_hist, f_left0, m):
    """Weighted sum for the window starting at combined index ``start``.

    ``fvals[n_hist]`` is ``f(x_b(0))``; ``f_left0`` is ``f(b(0))``. Windows
    containing index ``n_hist`` are split there so each side sees its own
    limit value.
    """
    n = 2 * m
    stop = start + n
    if stop <= n_hist or start >= n_hist:
        seg = fvals[start:stop + 1]
        if stop == n_hist:
            seg = seg.copy()
            seg[-1] = f_left0
        return float(np.dot(simpson_weights(n), seg))
    k_left = n_hist - start
    left = fvals[start:n_hist + 1].copy()
    left[-1] = f_left0
    right = fvals[n_hist:stop + 1]
    return float(np.dot(simpson_weights(k_left), left) + np.dot(simpson_weights(n - k_left), right))


def extend(b, f, horizon):
    """Continuation of ``b`` on ``[-1 - eps/2, horizon]`` by the method of steps.

    Nodes depend on the past only through a lag of ``1 - eps/2``, so blocks
    of ``K - m`` nodes are filled at once with a sliding Simpson window.
    """
    grid = b.grid
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    H = grid.index(horizon)
    K, m = grid.steps_per_unit, grid.m
    n_hist = grid.history_nodes
    lag = K - m
    scale = grid.dt / grid.eps
    w = simpson_weights(2 * m) * scale

    fvals = np.empty(n_hist + H + 1)
    xs = np.empty(n_hist + H + 1)
    xs[:n_hist] = b.samples[:n_hist]
    fvals[:n_hist + 1] = evaluate(f, b.samples)
    f_left0 = float(fvals[n_hist])
    if not np.all(np.isfinite(fvals[:n_hist + 1])):
        raise NonFiniteError("f(b) is not finite", t=0.0)

    done = 0  # continuation nodes computed so far
    while done <= H:
        stop = min(done + lag, H + 1)
        # window for continuation node i starts at combined index i
        block = np.correlate(fvals[done:stop + 2 * m], w, mode="valid")
        # windows touching t = 0 from the left need the split rule
        for i in range(max(done, K - m), min(stop, K + m)):
            block[i - done] = _window_values(fvals, i, n_hist, f_left0, m) * scale
        if not np.all(np.isfinite(block)):
            bad = done + int(np.nonzero(~np.isfinite(block))[0][0])
            raise NonFiniteError(f"non-finite value at t={bad * grid.dt}", t=bad * grid.dt)
        xs[n_hist + done:n_hist + stop] = block
        fb = evaluate(f, block)
        if not np.all(np.isfinite(fb)):
            bad = done + int(np.nonzero(~np.isfinite(fb))[0][0])
            raise NonFiniteError(f"f overflow at t={bad * grid.dt}", t=bad * grid.dt)
        fvals[n_hist + done:n_hist + stop] = fb
        done = stop
    return Trajectory(grid, -n_hist, xs, jump_at_zero=(float(b.samples[-1]), float(xs[n_hist])))


def window_integral(traj, f, t):
    """``(1/eps) * integral of f(x(s))`` over ``[t - 1 - eps/2, t - 1 + eps/2]`` by Simpson."""
    grid = traj.grid
    m = grid.m
    start = grid.index(t) - grid.steps_per_unit - m
    i = start - traj.offset
    if i < 0 or i + 2 * m >= traj.samples.size:
        raise DomainError(f"window of t={t} not covered by samples")
    fvals = evaluate(f, traj.samples[i:i + 2 * m + 1])
    scale = grid.dt / grid.eps
    if traj.jump_at_zero is not None and start < 0 < start + 2 * m + 1:
        n0 = -start  # position of node 0 inside the window
        f_left0 = float(evaluate(f, traj.jump_at_zero[0]))
        return _window_values(fvals, 0, n0, f_left0, m) * scale
    return float(np.dot(simpson_weights(2 * m), fvals)) * scale


def derivative(traj, f, t):
    """``x'(t) = (f(x(t - 1 + eps/2)) - f(x(t - 1 - eps/2))) / eps``.

    At the junction points the one-sided values ``(left, right)`` are
    returned as a tuple; elsewhere a float.
    """
    eps = traj.grid.eps
    s_hi = t - 1.0 + eps / 2.0
    s_lo = t - 1.0 - eps / 2.0
    snap = 1e-9
    at_jump = traj.jump_at_zero is not None and (abs(s_hi) < snap or abs(s_lo) < snap)
    if abs(t) < snap and traj.jump_at_zero is not None:
        raise DomainError("x_b is not differentiable at t=0 (jump)")
    if at_jump:
        left = (evaluate(f, traj.interp(s_hi, "left")) - evaluate(f, traj.interp(s_lo, "left"))) / eps
        right = (evaluate(f, traj.interp(s_hi, "right")) - evaluate(f, traj.interp(s_lo, "right"))) / eps
        return float(left), float(right)
    return float((evaluate(f, traj.interp(s_hi)) - evaluate(f, traj.interp(s_lo))) / eps)


def sup_bound_check(traj, R, slack=1e-9):
    """True iff every stored value (both limits at the jump) has ``|x| <= R + slack``."""
    vals = np.abs(traj.samples)
    worst = float(np.max(vals)) if vals.size else 0.0
    if traj.jump_at_zero is not None:
        worst = max(worst, abs(traj.jump_at_zero[0]))
    return worst <= R + slack
