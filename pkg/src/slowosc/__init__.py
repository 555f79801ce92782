"""Slowly oscillating solutions of a distributed-delay Volterra equation.

``b(t) = (1/eps) * integral of f(b(s))`` over ``[t - 1 - eps/2, t - 1 + eps/2]``:
quadrature integrator, first-return map, invariant-set barriers, the
small-eps square-wave limit and the age-structured population reduction.
"""

__version__ = "0.1.0"
