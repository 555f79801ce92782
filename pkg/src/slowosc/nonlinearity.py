"""Negative-feedback nonlinearities and their validation.

A :class:`NonlinearitySpec` is an immutable description of the feedback
function ``f``. Besides the arctangent and clipped-sine examples the catalog
has a ``linear`` map, the Ricker map used by the population reduction and a
small piecewise grammar for user supplied functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .roots import bisect, scan_roots

TAN_HALF = math.tan(0.5)

CATALOG = (
    "atan-shifted",
    "odd-sine-clipped",
    "asymmetric-sine-clipped",
    "linear",
    "ricker",
    "user-piecewise",
    "shifted-clamped",
)

DEFAULT_DOMAIN = (-10.0, 10.0)


class ConfigurationError(ValueError):
    """Unknown catalog tag or incomplete parameters."""


class DerivativeEstimationError(ArithmeticError):
    """Finite differences disagree: ``f`` is not differentiable at 0."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class ValidationError(ValueError):
    pass


@dataclass(frozen=True)
class NonlinearitySpec:
    """Immutable feedback function description.

    ``params`` holds the real parameters of the formula (slope for
    ``linear``, ``(alpha,)`` for ``ricker``, ``(kappa, x_clamp)`` for
    ``shifted-clamped``). ``pieces`` is only used by ``user-piecewise`` and
    ``base`` only by ``shifted-clamped``.
    """

    kind: str
    params: tuple = ()
    eval_domain: tuple = DEFAULT_DOMAIN
    breakpoints: tuple = ()
    pieces: tuple = ()
    base: NonlinearitySpec | None = field(default=None, compare=True)

    def __post_init__(self):
        if self.kind not in CATALOG:
            raise ConfigurationError(f"unknown nonlinearity kind {self.kind!r}")
        lo, hi = self.eval_domain
        if not lo < 0 < hi:
            raise ConfigurationError("eval_domain must contain 0 in its interior")

    def __call__(self, x):
        return evaluate(self, x)

    def describe(self):
        out = {"kind": self.kind, "params": list(self.params), "eval_domain": list(self.eval_domain)}
        if self.kind == "user-piecewise":
            out["breakpoints"] = list(self.breakpoints)
            out["pieces"] = [[list(t) if isinstance(t, tuple) else t for t in p] for p in self.pieces]
        if self.base is not None:
            out["base"] = self.base.describe()
        return out


def atan_shifted(eval_domain=DEFAULT_DOMAIN):
    return NonlinearitySpec("atan-shifted", eval_domain=eval_domain)


def odd_sine_clipped(eval_domain=DEFAULT_DOMAIN):
    return NonlinearitySpec("odd-sine-clipped", eval_domain=eval_domain)


def asymmetric_sine_clipped(eval_domain=DEFAULT_DOMAIN):
    return NonlinearitySpec("asymmetric-sine-clipped", eval_domain=eval_domain)


def linear(slope, eval_domain=DEFAULT_DOMAIN):
    return NonlinearitySpec("linear", params=(float(slope),), eval_domain=eval_domain)


def ricker(alpha, eval_domain=(-1.0, 20.0)):
    return NonlinearitySpec("ricker", params=(float(alpha),), eval_domain=eval_domain)


def piecewise(breakpoints, pieces, eval_domain=DEFAULT_DOMAIN):
    """User-defined piecewise function.

    ``breakpoints`` is an increasing sequence ``b_1 < ... < b_{n-1}``;
    ``pieces`` has ``n`` entries, piece ``k`` applying on
    ``[b_k, b_{k+1})``. Each piece is a sequence of terms summed together:

    * ``("const", c)``
    * ``("poly", (c0, c1, ...))`` for ``c0 + c1 x + ...``
    * ``("sin", amp, freq, phase)`` for ``amp sin(freq x + phase)``
    * ``("atan", amp, scale, shift)`` for ``amp atan(scale x + shift)``
    """
    breakpoints = tuple(float(b) for b in breakpoints)
    if len(pieces) != len(breakpoints) + 1:
        raise ConfigurationError("need exactly one more piece than breakpoints")
    if any(b1 >= b2 for b1, b2 in zip(breakpoints, breakpoints[1:])):
        raise ConfigurationError("breakpoints must be strictly increasing")
    norm = []
    for piece in pieces:
        terms = []
        for term in piece:
            name = term[0]
            if name == "const":
                terms.append(("const", float(term[1])))
            elif name == "poly":
                terms.append(("poly", tuple(float(c) for c in term[1])))
            elif name in ("sin", "atan"):
                if len(term) != 4:
                    raise ConfigurationError(f"{name} term needs 3 parameters")
                terms.append((name, float(term[1]), float(term[2]), float(term[3])))
            else:
                raise ConfigurationError(f"unknown term {name!r}")
        norm.append(tuple(terms))
    return NonlinearitySpec(
        "user-piecewise", eval_domain=eval_domain, breakpoints=breakpoints, pieces=tuple(norm)
    )


_TAGS = {
    "atan-shifted": atan_shifted,
    "odd-sine-clipped": odd_sine_clipped,
    "asymmetric-sine-clipped": asymmetric_sine_clipped,
}


def from_tag(tag, **params):
    """Build a catalog spec from a command-line tag.

    ``linear`` needs ``slope``; ``ricker`` needs ``alpha``.
    """
    if tag in _TAGS:
        return _TAGS[tag]()
    if tag == "linear":
        if "slope" not in params:
            raise ConfigurationError("linear nonlinearity needs a slope")
        return linear(params["slope"])
    if tag == "ricker":
        if "alpha" not in params:
            raise ConfigurationError("ricker nonlinearity needs alpha")
        return ricker(params["alpha"])
    raise ConfigurationError(f"unknown nonlinearity tag {tag!r}")


def _piece_value(terms, x):
    out = np.zeros_like(x)
    for term in terms:
        name = term[0]
        if name == "const":
            out = out + term[1]
        elif name == "poly":
            out = out + np.polynomial.polynomial.polyval(x, term[1])
        elif name == "sin":
            out = out + term[1] * np.sin(term[2] * x + term[3])
        else:
            out = out + term[1] * np.arctan(term[2] * x + term[3])
    return out


def _eval_array(spec, x):
    kind = spec.kind
    if kind == "atan-shifted":
        return -2.0 * np.arctan(x + TAN_HALF) + 1.0
    if kind == "odd-sine-clipped":
        inner = -x - 3.0 * np.sin(np.pi * x / 3.0)
        return np.where(x <= -3.0, 3.0, np.where(x >= 3.0, -3.0, inner))
    if kind == "asymmetric-sine-clipped":
        left = -x - np.sin(np.pi * x / 3.0)
        right = -x - np.sin(np.pi * x) / 3.0
        inner = np.where(x <= 0.0, left, right)
        return np.where(x <= -3.0, 3.0, np.where(x >= 3.0, -3.0, inner))
    if kind == "linear":
        if len(spec.params) != 1:
            raise ConfigurationError("linear nonlinearity needs a slope")
        return spec.params[0] * x
    if kind == "ricker":
        if len(spec.params) != 1:
            raise ConfigurationError("ricker nonlinearity needs alpha")
        return spec.params[0] * x * np.exp(-x)
    if kind == "user-piecewise":
        idx = np.searchsorted(spec.breakpoints, x, side="right")
        out = np.empty_like(x)
        for k, terms in enumerate(spec.pieces):
            mask = idx == k
            if np.any(mask):
                out[mask] = _piece_value(terms, x[mask])
        return out
    if kind == "shifted-clamped":
        kappa, x_clamp = spec.params
        base = spec.base
        floor = float(evaluate(base, x_clamp)) - kappa
        shifted = _eval_array(base, np.maximum(x + kappa, x_clamp)) - kappa
        return np.where(x <= x_clamp - kappa, floor, shifted)
    raise ConfigurationError(f"unknown nonlinearity kind {kind!r}")


def evaluate(spec, x):
    """``f(x)`` for a scalar or array ``x``."""
    arr = np.asarray(x, dtype=float)
    out = _eval_array(spec, np.atleast_1d(arr))
    if arr.ndim == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def _closed_form_fprime0(spec):
    kind = spec.kind
    if kind == "atan-shifted":
        return -2.0 * math.cos(0.5) ** 2
    if kind == "odd-sine-clipped":
        return -1.0 - math.pi
    if kind == "asymmetric-sine-clipped":
        # both pieces have slope -1 - pi/3 at the origin
        return -1.0 - math.pi / 3.0
    if kind == "linear":
        return spec.params[0]
    if kind == "ricker":
        return spec.params[0]
    return None


def central_difference(spec, x0=0.0, h=1e-5):
    return (evaluate(spec, x0 + h) - evaluate(spec, x0 - h)) / (2.0 * h)


def derivative_at_zero(spec, h=1e-4, rtol=1e-6):
    """``f'(0)``: closed form for the catalog, Richardson-checked differences otherwise."""
    exact = _closed_form_fprime0(spec)
    if exact is not None:
        return float(exact)
    f0 = evaluate(spec, 0.0)
    fwd = (evaluate(spec, h) - f0) / h
    bwd = (f0 - evaluate(spec, -h)) / h
    d1 = central_difference(spec, 0.0, h)
    d2 = central_difference(spec, 0.0, h / 2.0)
    richardson = (4.0 * d2 - d1) / 3.0
    kink = abs(fwd - bwd)
    scale = max(1.0, abs(richardson))
    if kink > 1e-2 * scale:
        raise DerivativeEstimationError(
            f"one-sided slopes at 0 differ ({bwd:.6g} vs {fwd:.6g})", residual=kink
        )
    if abs(d2 - richardson) > max(rtol * scale, 1e-3 * kink):
        raise DerivativeEstimationError(
            "central differences do not settle under step halving", residual=abs(d2 - richardson)
        )
    return float(richardson)


@dataclass(frozen=True)
class FeedbackReport:
    """Outcome of :func:`validate`.

    ``kappa1``/``kappa2`` are ``None`` when ``f(x) = -x`` has no root on the
    corresponding side of the sampled domain.
    """

    negative_feedback_ok: bool
    fprime0: float
    kappa1: float | None
    kappa2: float | None
    tail_ok: bool
    violations: tuple
    spec: NonlinearitySpec | None = None

    @property
    def passed(self):
        return (
            self.negative_feedback_ok
            and self.tail_ok
            and self.fprime0 < -1.0
            and self.kappa1 is not None
            and self.kappa2 is not None
        )

    def hypotheses(self):
        """Which hypotheses of the existence and limit results hold."""
        return {
            "assumption_feedback": self.passed,
            "fprime0_below_minus_1": self.fprime0 < -1.0,
            "fprime0_below_minus_2": self.fprime0 < -2.0,
        }

    def to_dict(self):
        return {
            "passed": self.passed,
            "negative_feedback_ok": self.negative_feedback_ok,
            "fprime0": self.fprime0,
            "kappa1": self.kappa1,
            "kappa2": self.kappa2,
            "tail_ok": self.tail_ok,
            "n_violations": len(self.violations),
            "violations": [list(v) for v in self.violations[:20]],
            "hypotheses": self.hypotheses(),
        }


def _first_crossing(spec, direction, width, xtol):
    """First root of ``f(x) + x`` moving away from 0 in ``direction``."""
    lo, hi = spec.eval_domain
    end = hi if direction > 0 else lo
    step = width / 1e5
    n = int(math.ceil(abs(end) / step))
    xs = direction * step * np.arange(1, n + 1)
    xs[-1] = end
    g = direction * (evaluate(spec, xs) + xs)
    # inside the set the sign of direction*(f(x)+x) is negative
    bad = np.nonzero(g >= 0.0)[0]
    if bad.size == 0:
        return None
    i = bad[0]
    if i == 0:
        return None
    if g[i] == 0.0:
        return float(xs[i])
    func = lambda x: evaluate(spec, x) + x  # noqa: E731
    a, b = sorted((xs[i - 1], xs[i]))
    return bisect(func, a, b, xtol=xtol)


def validate(spec, n_samples=20001, xtol=1e-12):
    """Check the negative-feedback assumption on ``spec.eval_domain``.

    Negative feedback is sampled on ``n_samples`` nonzero grid points. The
    asymptotic tail conditions are only checked at the domain edges, which
    is a heuristic for statements about infinity.
    """
    lo, hi = spec.eval_domain
    xs = np.linspace(lo, hi, n_samples)
    xs = xs[xs != 0.0]
    fx = evaluate(spec, xs)
    bad = xs * fx >= 0.0
    violations = tuple((float(x), "x*f(x) >= 0") for x in xs[bad])
    try:
        fp0 = derivative_at_zero(spec)
    except DerivativeEstimationError as err:
        fp0 = float("nan")
        violations += ((0.0, f"derivative: {err} (residual {err.residual:.3g})"),)
    width = hi - lo
    k2 = _first_crossing(spec, +1, width, xtol)
    k1 = _first_crossing(spec, -1, width, xtol)
    f_lo, f_hi = evaluate(spec, lo), evaluate(spec, hi)
    tail_ok = f_hi < 0.0 < f_lo and f_hi / hi > -1.0 and f_lo / lo > -1.0
    if not tail_ok:
        violations += ((float(hi), "tail condition at domain edge"),)
    if not fp0 < -1.0:
        violations += ((0.0, f"f'(0) = {fp0:.6g} is not below -1"),)
    return FeedbackReport(
        negative_feedback_ok=not bool(np.any(bad)),
        fprime0=fp0,
        kappa1=k1,
        kappa2=k2,
        tail_ok=bool(tail_ok),
        violations=violations,
        spec=spec,
    )


def period_two_points(spec, search_interval=(-6.0, 6.0), tol=1e-12, step=1e-4):
    """Sorted roots of ``f(f(x)) - x`` on ``search_interval``.

    Sign changes are located on a grid of spacing ``step`` and refined by
    bisection to ``tol``. An empty list means no sign change was found.
    """
    lo, hi = search_interval
    g = lambda x: evaluate(spec, evaluate(spec, x)) - x  # noqa: E731
    roots = scan_roots(g, lo, hi, step, xtol=tol)
    out = []
    for r in roots:
        if not out or abs(r - out[-1]) > 10 * tol:
            out.append(r)
    return out


def golden_argmax(func, a, b, iters=100):
    """``(x, func(x))`` maximising a unimodal ``func`` on ``[a, b]``."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = a, b
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = func(d)
    cands = [(fc, c), (fd, d), (func(lo), lo), (func(hi), hi)]
    fx, x = max(cands)
    return float(x), float(fx)


def _golden_max(func, a, b, iters=100):
    return golden_argmax(func, a, b, iters)[1]


def max_abs_on(spec, lo, hi, n=20001):
    """``max |f|`` on ``[lo, hi]``: grid search refined by golden section."""
    xs = np.linspace(lo, hi, n)
    vals = np.abs(evaluate(spec, xs))
    i = int(np.argmax(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, n - 1)]
    refined = _golden_max(lambda x: abs(evaluate(spec, x)), a, b)
    return float(max(vals[i], refined))


def analysis_constants(spec, R_floor=0.0, n_grid=20001):
    """Constants ``(a0, A0, R)`` of the uniform-bound argument.

    ``a0``: largest grid value such that ``f`` is strictly decreasing on
    ``[-a0, a0]`` and, on each side of the origin, ``|f(x)|`` beyond ``a0``
    never drops below ``max |f|`` between 0 and ``a0``.
    ``A0``: smallest grid value with ``|f(x)| < |x|`` at every sampled
    ``|x| >= A0``. ``R = max(R_floor, max_{|x|<=A0} |f(x)|)``.
    """
    lo, hi = spec.eval_domain
    half = min(-lo, hi)
    n_side = (n_grid - 1) // 2
    h = half / n_side
    pos = h * np.arange(n_side + 1)
    fpos = evaluate(spec, pos)
    fneg = evaluate(spec, -pos)

    dec_pos = np.diff(fpos) < 0.0
    dec_neg = np.diff(fneg) > 0.0
    ok_mono = np.logical_and.accumulate(dec_pos & dec_neg)
    # suffix minima of |f| beyond each grid point, per side
    sfx_pos = np.minimum.accumulate(np.abs(fpos)[::-1])[::-1]
    sfx_neg = np.minimum.accumulate(np.abs(fneg)[::-1])[::-1]
    pmax_pos = np.maximum.accumulate(np.abs(fpos))
    pmax_neg = np.maximum.accumulate(np.abs(fneg))
    ok_eq6 = (sfx_pos >= pmax_pos) & (sfx_neg >= pmax_neg)
    a0 = None
    for k in range(1, n_side + 1):
        if not ok_mono[k - 1]:
            break
        if ok_eq6[k]:
            a0 = k * h
    if a0 is None:
        raise ValidationError("no a0: f is not strictly decreasing near 0")

    xs = np.linspace(lo, hi, n_grid)
    fx = evaluate(spec, xs)
    bad = (np.abs(fx) >= np.abs(xs)) & (xs != 0.0)
    step = (hi - lo) / (n_grid - 1)
    if not np.any(bad):
        A0 = step
    else:
        if np.any(xs[bad] >= hi - step) or np.any(xs[bad] <= lo + step):
            raise ValidationError("no A0 inside eval_domain: |f(x)| >= |x| at the edge")
        A0 = float(np.max(np.abs(xs[bad]))) + step
    R = max(float(R_floor), max_abs_on(spec, -A0, A0, n=n_grid))
    return a0, A0, R
