"""Brackets, regularity tests, slice functionals and pseudofiber directions.

Points m = (q, p) live on the ambient axes of :mod:`multisymp.hamilton`:
the N base-point axes followed by the C momentum axes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels, dual
from .exterior import ExteriorElement, basis_indices
from .grassmann import ProblemShape, null_space
from .hamilton import (
    DiscreteCurve,
    HamiltonError,
    HamiltonianFunction,
    active_axes,
    hamilton_residual,
    hamilton_solution_space,
)

__all__ = [
    "ObservableFunction",
    "PseudofiberDirections",
    "RegularityReport",
    "SliceResult",
    "PataplecticReport",
    "ObservableError",
    "coordinate_observable",
    "bracket",
    "grand_bracket",
    "is_regular",
    "slice_functional",
    "generalized_pseudofiber_directions",
    "directions_field",
    "pataplectic_invariance_check",
]


class ObservableError(ValueError):
    pass


@dataclass
class ObservableFunction:
    """f: (q, p) -> R^r written with generic arithmetic.

    ``fn(q, p)`` receives sequences and returns a scalar or a sequence of r
    scalars. ``factorization(q, h)`` optionally declares f = f_hat(q, H(q, p)).
    """

    shape: ProblemShape
    fn: Callable
    r: int = 1
    factorization: Callable | None = None
    name: str = "f"

    def value(self, q, p) -> np.ndarray:
        out = self.fn(list(np.asarray(q, dtype=float)), list(np.asarray(p, dtype=float)))
        return np.array([float(dual.value_of(c)) for c in np.atleast_1d(np.asarray(out, dtype=object))])

    def jacobian(self, q, p) -> np.ndarray:
        """(r, N + C) derivatives."""
        N = self.shape.N
        x0 = np.concatenate([np.asarray(q, dtype=float), np.asarray(p, dtype=float)])
        seeds = dual.seed(x0)
        out = self.fn(seeds[:N], seeds[N:])
        comps = out if isinstance(out, (list, tuple)) else [out]
        rows = []
        for c in comps:
            if isinstance(c, dual.DualScalar):
                rows.append(np.asarray(c.partials, dtype=float))
            else:
                rows.append(np.zeros(x0.size))
        return np.array(rows)


def coordinate_observable(shape: ProblemShape, axes: Sequence[int], name: str | None = None) -> ObservableFunction:
    """f = (q^{a_1}, ..., q^{a_r}) for 1-based base-point axes a_j."""
    axes = [int(a) for a in axes]
    for a in axes:
        if not 1 <= a <= shape.N:
            raise ObservableError(f"axis {a} outside 1..{shape.N}")

    def fn(q, p):
        return [q[a - 1] for a in axes]

    def fhat(q, h):
        return [q[a - 1] for a in axes]

    return ObservableFunction(shape, fn, len(axes), fhat, name or "q" + ",".join(map(str, axes)))


def _grad_h(H: HamiltonianFunction, q, p) -> np.ndarray:
    _, dq, dp = H.gradient(q, p)
    return np.concatenate([dq, dp])


def bracket(H: HamiltonianFunction, f: ObservableFunction, alpha: Sequence[int], mu: int, m, component: int = 0) -> float:
    """{H, f}^alpha_{alpha_mu} = H_{p_alpha} f_{q^alpha_mu} - f_{p_alpha} H_{q^alpha_mu}.

    ``alpha`` is an increasing multi-index of n base-point axes (1-based) and
    ``mu`` a 1-based position inside it.
    """
    s = H.shape
    q, p = m
    alpha = tuple(int(a) for a in alpha)
    if alpha not in s.position:
        raise ObservableError(f"{alpha} is not an increasing multi-index of length {s.n}")
    if not 1 <= mu <= s.n:
        raise ObservableError(f"position mu must lie in 1..{s.n}")
    dH = _grad_h(H, q, p)
    df = f.jacobian(q, p)[component]
    a_p = s.N + s.position[alpha]
    a_q = alpha[mu - 1] - 1
    return float(dH[a_p] * df[a_q] - df[a_p] * dH[a_q])


def grand_bracket(shape: ProblemShape, dH: np.ndarray, df: np.ndarray) -> np.ndarray:
    """All (r+1)x(r+1) pairings <d/dp_alpha ^ d/dq^{alpha_mu1} ^ ..., dH ^ df^1 ^ ...>."""
    df = np.atleast_2d(df)
    r = df.shape[0]
    rows = np.vstack([dH[None], df])
    out = []
    for alpha in shape.momentum_indices:
        a_p = shape.N + shape.position[alpha]
        for mus in itertools.combinations(range(shape.n), r):
            cols = [a_p] + [alpha[m] - 1 for m in mus]
            out.append(np.linalg.det(rows[:, cols]))
    return np.array(out)


@dataclass
class RegularityReport:
    verdict: bool
    failing_condition: str | None
    failing_sample: int | None
    factorization_residuals: list = field(default_factory=list)
    bracket_maxima: list = field(default_factory=list)
    message: str = ""


def is_regular(
    H: HamiltonianFunction,
    f: ObservableFunction,
    sample_points: Sequence,
    factor_tol: float = 1e-8,
    bracket_tol: float = 1e-8,
) -> RegularityReport:
    """Check (a) d_p f^i = lambda^i d_p H and (b) a nonvanishing grand bracket at every sample."""
    s = H.shape
    if f.r > s.n:
        raise ObservableError(f"r = {f.r} exceeds n = {s.n}")
    if not sample_points:
        raise ObservableError("no sample points")
    act = active_axes(s, H.choice)[s.N :]
    report = RegularityReport(True, None, None)
    for j, (q, p) in enumerate(sample_points):
        dH = _grad_h(H, q, p)
        df = f.jacobian(q, p)
        hp = dH[s.N :] * act
        nn = float(hp @ hp)
        worst = 0.0
        for row in df:
            fp = row[s.N :] * act
            lam = float(fp @ hp) / nn if nn > 0 else 0.0
            worst = max(worst, float(np.max(np.abs(fp - lam * hp))))
        if f.factorization is not None:
            h = H.value(q, p)
            fh = np.atleast_1d(np.asarray(f.factorization(list(q), h), dtype=float))
            worst = max(worst, float(np.max(np.abs(f.value(q, p) - fh))))
        coeffs = grand_bracket(s, dH, df)
        bmax = float(np.max(np.abs(coeffs))) if coeffs.size else 0.0
        report.factorization_residuals.append(worst)
        report.bracket_maxima.append(bmax)
        if report.verdict:
            if worst > factor_tol:
                report.verdict, report.failing_condition, report.failing_sample = False, "factorization", j
                report.message = f"sample {j}: d_p f is not proportional to d_p H (residual {worst:.3g})"
            elif bmax < bracket_tol:
                report.verdict, report.failing_condition, report.failing_sample = False, "bracket", j
                report.message = f"sample {j}: all bracket coefficients vanish (max {bmax:.3g})"
    if report.verdict:
        report.message = f"{f.r}-regular at all {len(sample_points)} samples"
    return report


# -- slices ---------------------------------------------------------------------


@dataclass
class SliceResult:
    value: float
    crossed: bool
    points: np.ndarray


def _form_coeffs(F, q, p, D: int, degree: int) -> np.ndarray:
    out = F(q, p)
    if isinstance(out, ExteriorElement):
        return out.to_dense()
    return np.atleast_1d(np.asarray(out, dtype=float)).reshape(math.comb(D, degree))


def slice_functional(
    F: Callable,
    f: ObservableFunction,
    s: float,
    curve: DiscreteCurve,
    transversality_tol: float = 1e-10,
) -> SliceResult:
    """Integral of an (n-1)-form F over {f = s} on the curve, n in {1, 2}.

    ``F(q, p)`` returns the coefficients of an ambient (n-1)-form (a scalar
    for n = 1, a length N + C array of dq/dp components for n = 2).
    """
    sh = curve.shape
    n = sh.n
    if n not in (1, 2):
        raise ObservableError("slice_functional supports n = 1 and n = 2")
    D = sh.N + sh.C
    g = curve.grid
    q = curve.base_points()
    amb = np.concatenate([q, curve.p], axis=-1)  # (*grid, D)
    vals = np.empty(g.shape)
    for node in np.ndindex(*g.shape):
        vals[node] = f.value(q[node], curve.p[node])[0] - s
    grads = [np.gradient(vals, ax, axis=mu, edge_order=2) for mu, ax in enumerate(g.axes)]
    grad = np.stack(grads, axis=-1)

    def crossing(line_vals, line_amb, line_grad):
        """Interpolated crossings along one grid line: list of (ambient point, grad)."""
        hits = []
        for j in range(len(line_vals) - 1):
            a, b = line_vals[j], line_vals[j + 1]
            if a == 0.0 or a * b < 0.0 or (b == 0.0 and j == len(line_vals) - 2):
                t = 0.0 if a == 0.0 else (1.0 if b == 0.0 else a / (a - b))
                pt = (1 - t) * line_amb[j] + t * line_amb[j + 1]
                gr = (1 - t) * line_grad[j] + t * line_grad[j + 1]
                if np.linalg.norm(gr) < transversality_tol:
                    raise ObservableError("level set is crossed tangentially")
                hits.append((pt, gr))
        return hits

    if n == 1:
        hits = crossing(vals, amb, grad)
        if not hits:
            return SliceResult(0.0, False, np.zeros((0, D)))
        total = 0.0
        for pt, gr in hits:
            # orientation of a point: sign of df(X), X the curve tangent
            total += math.copysign(1.0, gr[0]) * float(_form_coeffs(F, pt[: sh.N], pt[sh.N :], D, 0)[0])
        return SliceResult(total, True, np.array([pt for pt, _ in hits]))

    axis = int(np.argmax([np.mean(np.abs(grad[..., mu])) for mu in range(2)]))
    other = 1 - axis
    points, orients = [], []
    for j in range(g.shape[other]):
        sl = [slice(None), slice(None)]
        sl[other] = j
        sl = tuple(sl)
        hits = crossing(vals[sl], amb[sl], grad[sl])
        if len(hits) > 1:
            raise ObservableError("level set meets a grid line more than once; refine the sampling")
        if hits:
            pt, gr = hits[0]
            points.append(pt)
            orients.append(np.array([-gr[1], gr[0]]))
    if len(points) < 2:
        return SliceResult(0.0, False, np.array(points).reshape(-1, D))
    pts = np.array(points)
    chord = pts[-1, :2] - pts[0, :2]
    if chord @ np.mean(orients, axis=0) < 0:
        pts = pts[::-1]
    coeffs = np.array([_form_coeffs(F, pt[: sh.N], pt[sh.N :], D, 1) for pt in pts])
    total = 0.0
    for a in range(len(pts) - 1):
        total += 0.5 * float((coeffs[a] + coeffs[a + 1]) @ (pts[a + 1] - pts[a]))
    return SliceResult(total, True, pts)


# -- generalized pseudofiber directions ------------------------------------------


@dataclass
class PseudofiberDirections:
    """Basis (rows, ambient N + C components) of L^H at m."""

    q: np.ndarray
    p: np.ndarray
    basis: np.ndarray
    samples: int

    @property
    def dimension(self) -> int:
        return int(self.basis.shape[0])

    def momentum_part(self) -> np.ndarray:
        return self.basis[:, len(self.q) :]

    def projection_residual(self, xi: np.ndarray) -> float:
        xi = np.asarray(xi, dtype=float)
        if self.dimension == 0:
            return float(np.max(np.abs(xi))) if xi.size else 0.0
        return float(np.max(np.abs(xi - self.basis.T @ (self.basis @ xi))))


def _variation_rows(shape: ProblemShape, tangents: np.ndarray, act: np.ndarray) -> np.ndarray:
    """Rows (delta X) _| Omega for delta X = X with slot mu replaced by each ambient axis."""
    n, D = tangents.shape
    stack = np.repeat(tangents[None], n * D, axis=0)
    for mu in range(n):
        for a in range(D):
            row = stack[mu * D + a]
            row[mu] = 0.0
            row[mu, a] = 1.0
    return _kernels.contract_omega(stack, shape.index_table, act[shape.N :], shape.N) * act[None, :]


def generalized_pseudofiber_directions(
    H: HamiltonianFunction,
    q,
    p,
    rng: np.random.Generator | None = None,
    n_samples: int = 12,
) -> PseudofiberDirections:
    """Null space of xi -> xi _| Omega (delta X) over sampled solutions X at m."""
    s = H.shape
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    _, _, dp = H.gradient(q, p)
    if not np.any(dp):
        raise HamiltonError("d_p H vanishes at m")
    space = hamilton_solution_space(H, q, p)
    act = active_axes(s, H.choice)
    cols = np.flatnonzero(act)

    def basis_from(rows):
        ns = null_space(rows[:, cols], len(cols))
        out = np.zeros((len(ns), act.size))
        out[:, cols] = ns
        return out

    blocks = [_variation_rows(s, space.member(), act)]
    drawn = 0
    limit = 4 * n_samples
    half_dim = None
    while True:
        while drawn < n_samples:
            blocks.append(_variation_rows(s, space.sample(rng), act))
            drawn += 1
            if drawn == n_samples // 2:
                half_dim = basis_from(np.vstack(blocks)).shape[0]
        result = basis_from(np.vstack(blocks))
        if result.shape[0] == half_dim or n_samples >= limit:
            break
        half_dim = result.shape[0]
        n_samples = min(2 * n_samples, limit)
    return PseudofiberDirections(q, p, result, drawn + 1)


def directions_field(H: HamiltonianFunction, curve: DiscreteCurve, rng=None, n_samples: int = 12) -> list:
    """Generalized pseudofiber directions at every node, in C order."""
    q = curve.base_points()
    rng = np.random.default_rng(0) if rng is None else rng
    return [
        generalized_pseudofiber_directions(H, q[node], curve.p[node], rng, n_samples)
        for node in np.ndindex(*curve.grid.shape)
    ]


# -- pataplectic invariance -----------------------------------------------------


@dataclass
class PataplecticReport:
    passed: bool
    condition1: bool
    condition2: bool
    max_dh_xi: float
    increases: dict
    bounds: dict
    slope: float | None
    message: str = ""


def pataplectic_invariance_check(
    H: HamiltonianFunction,
    curve: DiscreteCurve,
    xi_section,
    directions: list | None = None,
    s_values: Sequence[float] = (1e-2, 1e-3),
    dh_tol: float = 1e-9,
    membership_tol: float = 1e-9,
    bound_constant: float = 100.0,
) -> PataplecticReport:
    """(1) dH(xi) = 0 at each node; (2) the flow p -> p + s xi keeps the Hamilton residual.

    ``xi_section`` is an array (*grid, N + C) or a callable (q, p) -> (N + C,).
    ``directions`` are per-node :class:`PseudofiberDirections` (computed when omitted).
    """
    sh = curve.shape
    g = curve.grid
    D = sh.N + sh.C
    q = curve.base_points()
    if callable(xi_section):
        xi = np.empty(g.shape + (D,))
        for node in np.ndindex(*g.shape):
            xi[node] = xi_section(q[node], curve.p[node])
    else:
        xi = np.broadcast_to(np.asarray(xi_section, dtype=float), g.shape + (D,))
    if directions is None and np.any(xi):
        directions = directions_field(H, curve)
    worst = 0.0
    for j, node in enumerate(np.ndindex(*g.shape)):
        x = xi[node]
        if not np.any(x):
            continue
        res = directions[j].projection_residual(x)
        if res > membership_tol * max(1.0, float(np.max(np.abs(x)))):
            raise ObservableError(f"xi at node {node} is not a generalized pseudofiber direction (residual {res:.3g})")
        worst = max(worst, abs(float(_grad_h(H, q[node], curve.p[node]) @ x)))
    cond1 = worst <= dh_tol
    base = hamilton_residual(curve, H).max_norm
    h2 = float(np.max(g.spacing)) ** 2
    scale = 1.0 + float(np.max(np.abs(xi))) if xi.size else 1.0
    increases, bounds = {}, {}
    for sv in s_values:
        moved = curve.with_momenta(curve.p + sv * xi[..., sh.N :], level=curve.level)
        inc = max(0.0, hamilton_residual(moved, H).max_norm - base)
        increases[float(sv)] = inc
        bounds[float(sv)] = bound_constant * scale * sv * h2
    cond2 = all(increases[sv] <= bounds[sv] for sv in increases)
    slope = None
    svals = sorted(increases)
    if len(svals) >= 2 and all(increases[sv] > 0 for sv in svals):
        xs = np.log(svals)
        ys = np.log([increases[sv] for sv in svals])
        slope = float(np.polyfit(xs, ys, 1)[0])
    msg = []
    if not cond1:
        msg.append(f"dH(xi) reaches {worst:.3g}")
    if not cond2:
        msg.append("Hamilton residual grows faster than O(s h^2) along the flow")
    return PataplecticReport(cond1 and cond2, cond1, cond2, worst, increases, bounds, slope, "; ".join(msg) or "invariant")
