"""Bracketing root finders shared by the analysis modules."""

import numpy as np


class BracketError(ValueError):
    """No sign change inside the requested bracket."""


def bisect(func, lo, hi, xtol=1e-12, max_iter=200):
    """Root of ``func`` in ``[lo, hi]`` by plain bisection.

    ``func(lo)`` and ``func(hi)`` must have opposite signs (or one of them
    must vanish). Iterates until the bracket is narrower than ``xtol``.
    """
    flo = func(lo)
    fhi = func(hi)
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= xtol or mid in (lo, hi):
            break
        fmid = func(mid)
        if fmid == 0.0:
            return float(mid)
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def scan_roots(func, lo, hi, step, xtol=1e-12):
    """All sign-change roots of a vectorised ``func`` on ``[lo, hi]``.

    The interval is sampled at spacing ``step``; every sign change between
    neighbouring samples is refined by bisection. Samples where ``func`` is
    exactly zero are returned as roots. Tangential zeros that do not change
    sign are missed unless they land on a sample.
    """
    n = max(int(np.ceil((hi - lo) / step)), 1)
    xs = np.linspace(lo, hi, n + 1)
    ys = np.asarray(func(xs), dtype=float)
    roots = []
    exact = ys == 0.0
    roots.extend(float(x) for x in xs[exact])
    s = np.sign(ys)
    idx = np.nonzero((s[:-1] * s[1:]) < 0)[0]
    scalar = lambda x: float(np.asarray(func(np.array([x])))[0])  # noqa: E731
    for i in idx:
        roots.append(bisect(scalar, xs[i], xs[i + 1], xtol=xtol))
    return sorted(roots)
