"""Mathieu characteristic values from the three-term recurrences.

Solves ``y'' + (a - 2 q cos 2z) y = 0`` for the characteristic values
a_0, b_1, a_1, b_2 by locating zeros of the continued-fraction residual of the
Fourier-coefficient recurrence.  This is deliberately independent of the
plane-wave diagonalization in :mod:`orbitalcluster.bloch` and is used to check it.

For the lattice ``(V0/2) cos(2 pi x / a)`` in recoil units, ``q = V0 / 4`` and
the band edges are E1 in [a0, b1] and E2 in [a1, b2].
"""
from __future__ import annotations

import numpy as np
from scipy import optimize

_DEPTH = 60


def _tail(a: float, q: float, orders) -> float:
    """Ratio c_{k+1} / c_k for the first order listed, from the recurrence tail."""
    g = 0.0
    for n in reversed(orders):
        g = q / (a - n * n - q * g)
    return g


def _residual(kind: str, a: float, q: float) -> float:
    if kind == "a0":
        # a A0 - q A2 = 0 ; (a-4) A2 - q (A4 + 2 A0) = 0
        g = _tail(a, q, [2 * r for r in range(2, _DEPTH)])
        return a * (a - 4.0 - q * g) - 2.0 * q * q
    if kind == "a1":
        g = _tail(a, q, [2 * r + 1 for r in range(1, _DEPTH)])
        return a - 1.0 - q - q * g
    if kind == "b1":
        g = _tail(a, q, [2 * r + 1 for r in range(1, _DEPTH)])
        return a - 1.0 + q - q * g
    if kind == "b2":
        g = _tail(a, q, [2 * r for r in range(2, _DEPTH)])
        return a - 4.0 - q * g
    raise ValueError(kind)


def characteristic_value(kind: str, q: float) -> float:
    """Characteristic value ``kind`` in {a0, b1, a1, b2} for Mathieu parameter q >= 0.

    The residual has poles wherever a truncated denominator vanishes, so the
    root is bracketed by scanning for sign changes of the residual that are
    not accompanied by a blow-up, starting from the lowest one.
    """
    if q == 0.0:
        return {"a0": 0.0, "b1": 1.0, "a1": 1.0, "b2": 4.0}[kind]
    lo = -2.0 * q - 2.0
    hi = {"a0": 1.0, "b1": 4.0, "a1": 4.0, "b2": 16.0}[kind] + 1e-9
    xs = np.linspace(lo, hi, 4001)
    f = np.array([_residual(kind, x, q) for x in xs])
    for i in range(xs.size - 1):
        if np.sign(f[i]) != np.sign(f[i + 1]) and np.isfinite(f[i]) and np.isfinite(f[i + 1]):
            root = optimize.brentq(lambda x: _residual(kind, x, q), xs[i], xs[i + 1],
                                   xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
            # discard pole crossings: the residual stays large on both sides of a pole
            if abs(_residual(kind, root, q)) < 1e-8 * max(1.0, q * q):
                return root
    raise RuntimeError(f"no characteristic value {kind} found for q={q}")


def lattice_band_edges(V0: float) -> dict:
    """Band edges of the two lowest bands of (V0/2) cos(2 pi x / a), in E_r."""
    q = V0 / 4.0
    a0, b1, a1, b2 = (characteristic_value(k, q) for k in ("a0", "b1", "a1", "b2"))
    return {"E1_bottom": a0, "E1_top": b1, "E2_bottom": a1, "E2_top": b2}
