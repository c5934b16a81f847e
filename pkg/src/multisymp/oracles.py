"""Closed-form Hamiltonians for the built-in densities.

The formulas take ``e``, ``P`` with ``P[i][mu] = p^mu_i`` and, for n = k = 2,
``r = p_34``. They are independent of the Newton route in
:mod:`multisymp.legendre` and serve as oracles. Arithmetic is generic, so dual
scalars pass through.
"""

from __future__ import annotations

import numpy as np

from .lagrangian import LagrangianDensity

__all__ = [
    "trivial_2x2",
    "dirichlet_2x2",
    "maxwell_2d",
    "mechanics",
    "scalar_field",
    "closed_form",
    "closed_form_generic",
    "has_closed_form",
    "near_singular",
]


def _det(P):
    return P[0][0] * P[1][1] - P[0][1] * P[1][0]


def _sumsq(P):
    total = 0.0
    for row in P:
        for t in row:
            total = total + t * t
    return total


def trivial_2x2(e, P, r):
    return e - _det(P) / r


def dirichlet_2x2(e, P, r, B: float):
    s = r - B
    return e + (0.5 * _sumsq(P) + s * _det(P)) / (1.0 - s * s)


def maxwell_2d(e, P, r):
    # P[i][mu] = p^mu_i, so p^1_2 = P[1][0] and p^2_1 = P[0][1]
    p12, p21 = P[1][0], P[0][1]
    a = p12 + p21
    b = p12 - p21
    return e + (a * a - 4.0 * P[0][0] * P[1][1]) / (4.0 * r) - 0.25 * b * b / (2.0 + r)


def mechanics(e, P, y, omega: float = 1.0):
    yy = 0.0
    for t in y:
        yy = yy + t * t
    return e + 0.5 * _sumsq(P) + 0.5 * omega * omega * yy


def scalar_field(e, P):
    return e + 0.5 * _sumsq(P)


def has_closed_form(density: LagrangianDensity) -> bool:
    if density.name in ("trivial", "dirichlet", "maxwell2d"):
        return density.shape.n == 2 and density.shape.k == 2
    return density.name in ("mechanics", "scalar_field")


def closed_form_generic(density: LagrangianDensity, e, P, higher, y):
    """Closed-form H with generic scalars; None when no formula is known."""
    name = density.name
    if not has_closed_form(density):
        return None
    if name == "trivial":
        return trivial_2x2(e, P, higher[0])
    if name == "dirichlet":
        return dirichlet_2x2(e, P, higher[0], float(density.params.get("B", 0.0)))
    if name == "maxwell2d":
        return maxwell_2d(e, P, higher[0])
    if name == "mechanics":
        return mechanics(e, P, y, float(density.params.get("omega", 1.0)))
    return scalar_field(e, P)


def closed_form(density: LagrangianDensity, e: float, P, higher, q=None) -> float | None:
    """Closed-form H at float inputs, or None if there is none."""
    P = np.asarray(P, dtype=float)
    higher = np.atleast_1d(np.asarray(higher if higher is not None else [], dtype=float))
    if density.shape.n == 2 and density.shape.k == 2 and higher.size == 0:
        higher = np.zeros(1)
    y = np.zeros(density.shape.k) if q is None else np.asarray(q, dtype=float)[density.shape.n :]
    out = closed_form_generic(density, float(e), P, higher, y)
    return None if out is None else float(out)


def near_singular(density: LagrangianDensity, r: float, margin: float = 0.1) -> bool:
    """True when r is within ``margin`` of the density's singular set."""
    name = density.name
    if name == "trivial":
        sing = [0.0]
    elif name == "dirichlet":
        B = float(density.params.get("B", 0.0))
        sing = [B + 1.0, B - 1.0]
    elif name == "maxwell2d":
        sing = [0.0, -2.0]
    else:
        return False
    return any(abs(r - s) < margin for s in sing)
