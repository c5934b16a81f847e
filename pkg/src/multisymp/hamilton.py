"""Hamiltonian n-curves sampled on rectangular grids.

Ambient coordinates of the momentum space are ordered as the ``N = n + k``
base-point axes followed by the ``C`` momentum axes (lexicographic
multi-indices). The Hamilton equation checked at every node is

    X _| Omega = (-1)^n dH,    Omega = sum_A dp_A ^ dq^A,

with X the wedge of the grid tangents. On the de Donder-Weyl submanifold only
momentum axes with at most one fiber index take part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from . import _kernels, dual
from .exterior import (
    COVECTOR,
    VECTOR,
    ExteriorElement,
    basis,
    interior_left,
    permutation_sign,
    wedge_all,
    zero,
)
from .grassmann import (
    ProblemShape,
    annihilator,
    as_velocity,
    lift_dense,
    null_space,
    tangent_basis_omega,
)
from .lagrangian import LagrangianDensity, grad_q, grad_v
from .legendre import (
    ConvergenceError,
    DegenerateError,
    MomentumPoint,
    SubmanifoldChoice,
    dedecker_transform,
    hamiltonian_eval,
    hamiltonian_gradient,
    split_q,
)
from .oracles import closed_form_generic, has_closed_form

__all__ = [
    "Grid",
    "DiscreteCurve",
    "ResidualReport",
    "HamiltonianFunction",
    "ClosedFormHamiltonian",
    "LegendreHamiltonian",
    "closed_form_hamiltonian",
    "HamiltonError",
    "IntegrationError",
    "grid_derivative",
    "legendre_lift",
    "trivial_curve_family",
    "tangent_vectors",
    "tangent_n_vector",
    "omega_form",
    "active_axes",
    "hamilton_residual",
    "hamilton_residual_exterior",
    "integrate_mechanics",
    "HamiltonSolutionSpace",
    "hamilton_solution_space",
    "NVectorFamily",
    "n_vector_family",
    "deform_along_pseudofiber",
    "euler_lagrange_residual",
    "order_estimate",
    "critical_verdict",
]


class HamiltonError(ValueError):
    """Precondition failure in a Hamilton-side operation."""


class IntegrationError(RuntimeError):
    pass


def _sign_n(n: int) -> float:
    return -1.0 if n % 2 else 1.0


# -- grids ------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Rectangular lattice over the box [lower, upper] with ``nodes[mu]`` points per axis."""

    lower: tuple
    upper: tuple
    nodes: tuple

    def __post_init__(self):
        lo = tuple(float(a) for a in np.atleast_1d(self.lower))
        hi = tuple(float(a) for a in np.atleast_1d(self.upper))
        nd = tuple(int(a) for a in np.atleast_1d(self.nodes))
        if not (len(lo) == len(hi) == len(nd)):
            raise HamiltonError("grid lower, upper and nodes must have the same length")
        if any(m < 3 for m in nd):
            raise HamiltonError("grids need at least 3 nodes per axis")
        if any(b <= a for a, b in zip(lo, hi)):
            raise HamiltonError("grid upper bounds must exceed lower bounds")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "nodes", nd)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, m) for a, b, m in zip(self.lower, self.upper, self.nodes)]

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / (m - 1) for a, b, m in zip(self.lower, self.upper, self.nodes)])

    def points(self) -> np.ndarray:
        """Node coordinates, shape (*grid, n)."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def interior_mask(self) -> np.ndarray:
        mask = np.zeros(self.nodes, dtype=bool)
        mask[tuple(slice(1, m - 1) for m in self.nodes)] = True
        return mask

    def refined(self) -> "Grid":
        """Same box with the spacing halved."""
        return Grid(self.lower, self.upper, tuple(2 * m - 1 for m in self.nodes))


def grid_derivative(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Partial derivatives along every grid axis, appended as a last axis.

    Central differences inside, second-order one-sided at the boundary.
    """
    values = np.asarray(values, dtype=float)
    out = []
    for mu, ax in enumerate(grid.axes):
        out.append(np.gradient(values, ax, axis=mu, edge_order=2))
    return np.stack(out, axis=-1)


# -- curves -------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteCurve:
    """Grid samples of a section x -> (u(x), p(x)).

    ``u`` has shape (*grid, k), ``p`` shape (*grid, C). ``v`` optionally holds
    exact velocities (*grid, k, n); otherwise they are finite differences of u.
    """

    shape: ProblemShape
    grid: Grid
    u: np.ndarray
    p: np.ndarray
    choice: SubmanifoldChoice = SubmanifoldChoice.FULL
    level: float | None = None
    v: np.ndarray | None = None

    def __post_init__(self):
        g = self.grid.shape
        if self.grid.n != self.shape.n:
            raise HamiltonError(f"grid dimension {self.grid.n} != n = {self.shape.n}")
        try:
            u = np.asarray(self.u, dtype=float).reshape(g + (self.shape.k,))
            p = np.asarray(self.p, dtype=float).reshape(g + (self.shape.C,))
        except ValueError:
            raise HamiltonError(
                f"field arrays do not fit grid {g} with k = {self.shape.k}, C = {self.shape.C}"
            ) from None
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "choice", SubmanifoldChoice.parse(self.choice))
        if self.v is not None:
            v = np.asarray(self.v, dtype=float).reshape(g + (self.shape.k, self.shape.n))
            object.__setattr__(self, "v", v)

    def velocities(self) -> np.ndarray:
        return self.v if self.v is not None else grid_derivative(self.u, self.grid)

    def base_points(self) -> np.ndarray:
        """q = (x, u) at every node, shape (*grid, N)."""
        return np.concatenate([self.grid.points(), self.u], axis=-1)

    def momentum_point(self, node: Sequence[int]) -> MomentumPoint:
        node = tuple(node)
        return MomentumPoint(self.shape, self.base_points()[node], self.p[node], self.choice)

    def with_momenta(self, p: np.ndarray, level=None, choice=None) -> "DiscreteCurve":
        return replace(
            self, p=p, level=level, choice=self.choice if choice is None else choice
        )


@dataclass
class ResidualReport:
    """Per-node Euclidean norms of the residual one-form."""

    per_node: np.ndarray
    max_norm: float
    mean_norm: float
    components: np.ndarray | None = None
    mask: np.ndarray | None = None


# -- Hamiltonian functions ------------------------------------------------------


class HamiltonianFunction:
    """H(q, p) with gradient (d_q H, d_p H) on the ambient axes."""

    shape: ProblemShape
    choice: SubmanifoldChoice
    name: str = "H"

    def value(self, q, p) -> float:
        raise NotImplementedError

    def gradient(self, q, p, hint=None) -> tuple[float, np.ndarray, np.ndarray]:
        raise NotImplementedError

    def __call__(self, q, p) -> float:
        return self.value(q, p)


class ClosedFormHamiltonian(HamiltonianFunction):
    """H from a formula ``fn(q, p)`` written with generic arithmetic (dual friendly)."""

    def __init__(self, shape: ProblemShape, fn: Callable, choice=SubmanifoldChoice.FULL, name: str = "H"):
        self.shape = shape
        self.fn = fn
        self.choice = SubmanifoldChoice.parse(choice)
        self.name = name

    def value(self, q, p) -> float:
        q = np.asarray(q, dtype=float)
        p = np.asarray(p, dtype=float)
        return float(dual.value_of(self.fn(list(q), list(p))))

    def gradient(self, q, p, hint=None):
        N = self.shape.N
        x0 = np.concatenate([np.asarray(q, dtype=float), np.asarray(p, dtype=float)])

        def f(vals):
            return self.fn(vals[:N], vals[N:])

        val, g = dual.gradient(f, x0)
        return val, g[:N], g[N:]


class LegendreHamiltonian(HamiltonianFunction):
    """H obtained by inverting the Legendre correspondence of a density."""

    def __init__(self, density: LagrangianDensity, choice=SubmanifoldChoice.FULL):
        self.density = density
        self.shape = density.shape
        self.choice = SubmanifoldChoice.parse(choice)
        self.name = f"legendre[{density.name}]"

    def _point(self, q, p) -> MomentumPoint:
        return MomentumPoint(self.shape, q, p, self.choice)

    def value(self, q, p, hint=None) -> float:
        return hamiltonian_eval(self.density, q, self._point(q, p), v0=hint)[0]

    def solve(self, q, p, hint=None) -> tuple[float, np.ndarray]:
        return hamiltonian_eval(self.density, q, self._point(q, p), v0=hint)

    def gradient(self, q, p, hint=None):
        h, dq, dp, _ = hamiltonian_gradient(self.density, q, self._point(q, p), v0=hint)
        return h, dq, dp


def closed_form_hamiltonian(density: LagrangianDensity, choice=SubmanifoldChoice.FULL) -> ClosedFormHamiltonian:
    """The closed-form Hamiltonian of a built-in density as a HamiltonianFunction."""
    if not has_closed_form(density):
        raise HamiltonError(f"no closed form known for density {density.name!r}")
    shape = density.shape
    pos = shape.single_positions
    sg = shape.single_signs
    hp = list(shape.higher_positions)
    om = shape.omega_position

    def fn(q, p):
        P = [[sg[i, mu] * p[pos[i, mu]] for mu in range(shape.n)] for i in range(shape.k)]
        higher = [p[a] for a in hp]
        return closed_form_generic(density, p[om], P, higher, q[shape.n :])

    return ClosedFormHamiltonian(shape, fn, choice, f"closed[{density.name}]")


# -- lifts ----------------------------------------------------------------------


def _node_iter(grid: Grid):
    return np.ndindex(*grid.shape)


def _higher_field(shape: ProblemShape, grid: Grid, higher) -> np.ndarray:
    m = shape.higher_positions.size
    out_shape = grid.shape + (m,)
    if higher is None:
        return np.zeros(out_shape)
    h = np.asarray(higher, dtype=float)
    if h.shape == grid.shape and m >= 1:
        h = h[..., None]
    return np.broadcast_to(h, out_shape).astype(float)


def legendre_lift(
    density: LagrangianDensity,
    u,
    grid: Grid,
    choice=SubmanifoldChoice.FULL,
    higher=None,
    h: float = 0.0,
    du=None,
) -> DiscreteCurve:
    """Lift a field u on the grid to momenta lying in the level set H = h.

    ``du`` supplies exact velocities; otherwise central differences are used.
    """
    shape = density.shape
    choice = SubmanifoldChoice.parse(choice)
    u = np.asarray(u, dtype=float).reshape(grid.shape + (shape.k,))
    v = grid_derivative(u, grid) if du is None else np.asarray(du, dtype=float).reshape(
        grid.shape + (shape.k, shape.n)
    )
    hi = _higher_field(shape, grid, higher)
    if choice is SubmanifoldChoice.DDW and np.any(hi != 0.0):
        raise HamiltonError("dDW lifts pin all higher momentum components to 0")
    x = grid.points()
    p = np.empty(grid.shape + (shape.C,))
    for node in _node_iter(grid):
        q = np.concatenate([x[node], u[node]])
        p0, report = dedecker_transform(density, q, v[node], hi[node])
        if not report.solvable:
            raise DegenerateError(f"degenerate Legendre transform at node {node}")
        p0 = MomentumPoint(shape, q, p0.p, choice)
        try:
            h0, _ = hamiltonian_eval(density, q, p0, v0=v[node])
        except DegenerateError as exc:
            raise DegenerateError(f"degenerate lift at node {node}: {exc}") from exc
        except ConvergenceError as exc:
            raise ConvergenceError(f"Legendre lift failed at node {node}: {exc}") from exc
        p[node] = p0.shifted(float(h) - h0).p
    return DiscreteCurve(shape, grid, u, p, choice, float(h), None if du is None else v)


def _eps(i: int, j: int) -> int:
    return 0 if i == j else (1 if i < j else -1)


def trivial_curve_family(grid: Grid, u, du, r, h: float) -> DiscreteCurve:
    """Explicit Hamiltonian 2-curves of the density l = 0 (n = k = 2).

    e = r det(du) + h, p^mu_i = -r eps_ij eps^{mu nu} du^j/dx^nu, p_34 = r.
    """
    shape = ProblemShape(2, 2)
    u = np.asarray(u, dtype=float).reshape(grid.shape + (2,))
    du = np.asarray(du, dtype=float).reshape(grid.shape + (2, 2))
    r = np.broadcast_to(np.asarray(r, dtype=float), grid.shape)
    P = np.zeros(grid.shape + (2, 2))
    for i in range(2):
        for mu in range(2):
            for j in range(2):
                for nu in range(2):
                    c = _eps(i, j) * _eps(mu, nu)
                    if c:
                        P[..., i, mu] -= r * c * du[..., j, nu]
    det = du[..., 0, 0] * du[..., 1, 1] - du[..., 0, 1] * du[..., 1, 0]
    p = np.zeros(grid.shape + (shape.C,))
    p[..., shape.omega_position] = r * det + h
    for i in range(2):
        for mu in range(2):
            p[..., shape.single_positions[i, mu]] = shape.single_signs[i, mu] * P[..., i, mu]
    p[..., shape.higher_positions[0]] = r
    return DiscreteCurve(shape, grid, u, p, SubmanifoldChoice.FULL, float(h), du)


# -- tangents and residuals -------------------------------------------------------


def active_axes(shape: ProblemShape, choice) -> np.ndarray:
    """Mask over the N + C ambient axes that belong to the chosen submanifold."""
    choice = SubmanifoldChoice.parse(choice)
    p_active = shape.ddw_active if choice is SubmanifoldChoice.DDW else np.ones(shape.C, dtype=bool)
    return np.concatenate([np.ones(shape.N, dtype=bool), p_active])


def tangent_vectors(curve: DiscreteCurve) -> np.ndarray:
    """Grid tangents d/dx^mu of the section, shape (*grid, n, N + C)."""
    s = curve.shape
    g = curve.grid.shape
    v = curve.velocities()  # (*g, k, n)
    dp = grid_derivative(curve.p, curve.grid)  # (*g, C, n)
    t = np.zeros(g + (s.n, s.N + s.C))
    for mu in range(s.n):
        t[..., mu, mu] = 1.0
        t[..., mu, s.n : s.N] = v[..., :, mu]
        t[..., mu, s.N :] = dp[..., :, mu]
    return t


def _ambient_vector(D: int, comps: np.ndarray) -> ExteriorElement:
    return ExteriorElement(D, 1, VECTOR, [((a + 1,), c) for a, c in enumerate(comps)])


def tangent_n_vector(curve: DiscreteCurve, node: Sequence[int]) -> ExteriorElement:
    """X = t_1 ^ ... ^ t_n at a node, normalized so that <X, dx^1 ^ ... ^ dx^n> = 1."""
    t = tangent_vectors(curve)[tuple(node)]
    D = t.shape[1]
    X = wedge_all([_ambient_vector(D, t[mu]) for mu in range(curve.shape.n)])
    norm = X[tuple(range(1, curve.shape.n + 1))]
    return X * (1.0 / norm)


def omega_form(shape: ProblemShape, choice=SubmanifoldChoice.FULL) -> ExteriorElement:
    """Omega = sum_A dp_A ^ dq^A on the ambient axes of the chosen submanifold."""
    D = shape.N + shape.C
    act = active_axes(shape, choice)[shape.N :]
    out = zero(D, shape.n + 1, COVECTOR)
    for a, idx in enumerate(shape.momentum_indices):
        if act[a]:
            out = out + basis(D, (shape.N + 1 + a,) + idx, COVECTOR)
    return out


def _h_gradients(curve: DiscreteCurve, H: HamiltonianFunction) -> np.ndarray:
    """(*grid, N + C) array of dH at every node."""
    s = curve.shape
    q = curve.base_points()
    hint = curve.velocities()
    out = np.empty(curve.grid.shape + (s.N + s.C,))
    for node in _node_iter(curve.grid):
        _, dq, dp = H.gradient(q[node], curve.p[node], hint=hint[node])
        out[node] = np.concatenate([dq, dp])
    return out


def hamilton_residual(
    curve: DiscreteCurve, H: HamiltonianFunction, interior_only: bool = True
) -> ResidualReport:
    """Nodewise X _| Omega - (-1)^n dH with X from grid tangents."""
    s = curve.shape
    g = curve.grid.shape
    act = active_axes(s, curve.choice)
    t = tangent_vectors(curve).reshape((-1, s.n, s.N + s.C))
    lhs = _kernels.contract_omega(t, s.index_table, act[s.N :], s.N)
    dh = _h_gradients(curve, H).reshape((-1, s.N + s.C))
    res = (lhs - _sign_n(s.n) * dh) * act[None, :]
    norms = np.linalg.norm(res, axis=1).reshape(g)
    mask = curve.grid.interior_mask() if interior_only else np.ones(g, dtype=bool)
    sel = norms[mask]
    return ResidualReport(norms, float(sel.max()), float(sel.mean()), res.reshape(g + (-1,)), mask)


def hamilton_residual_exterior(curve: DiscreteCurve, H: HamiltonianFunction, node: Sequence[int]) -> np.ndarray:
    """Residual one-form at one node through the sparse exterior algebra (slow reference)."""
    s = curve.shape
    node = tuple(node)
    t = tangent_vectors(curve)[node]
    D = s.N + s.C
    X = wedge_all([_ambient_vector(D, t[mu]) for mu in range(s.n)])
    form = interior_left(X, omega_form(s, curve.choice)).to_dense()
    _, dq, dp = H.gradient(curve.base_points()[node], curve.p[node], hint=curve.velocities()[node])
    act = active_axes(s, curve.choice)
    return (form - _sign_n(s.n) * np.concatenate([dq, dp])) * act


# -- point mechanics -------------------------------------------------------------------


def integrate_mechanics(
    H: HamiltonianFunction, y0, p0, t_span: tuple[float, float], dt: float, h: float = 0.0
) -> DiscreteCurve:
    """RK4 for dy/dt = dH/dp, dp/dt = -dH/dy with e chosen so that H = h."""
    s = H.shape
    if s.n != 1:
        raise HamiltonError("integrate_mechanics needs n = 1")
    t0, t1 = float(t_span[0]), float(t_span[1])
    steps = int(round((t1 - t0) / dt))
    if steps < 2:
        raise HamiltonError("time span must cover at least two steps")
    ts = np.linspace(t0, t1, steps + 1)
    dt = (t1 - t0) / steps
    pos = s.single_positions[:, 0]
    sg = s.single_signs[:, 0]
    om = s.omega_position

    def momenta(t, y, P):
        p = np.zeros(s.C)
        p[pos] = sg * P
        q = np.concatenate([[t], y])
        h0, _, dp = H.gradient(q, p)
        p[om] = (h - h0) / dp[om]
        return q, p

    def rhs(t, state):
        y, P = state[: s.k], state[s.k :]
        q, p = momenta(t, y, P)
        _, dq, dp = H.gradient(q, p)
        return np.concatenate([sg * dp[pos], -sg * dq[1:]])

    state = np.concatenate([np.asarray(y0, dtype=float).reshape(-1), np.asarray(p0, dtype=float).reshape(-1)])
    if state.shape != (2 * s.k,):
        raise HamiltonError(f"need {s.k} positions and {s.k} momenta")
    states = np.empty((steps + 1, 2 * s.k))
    states[0] = state
    for j in range(steps):
        t = ts[j]
        try:
            k1 = rhs(t, state)
            k2 = rhs(t + 0.5 * dt, state + 0.5 * dt * k1)
            k3 = rhs(t + 0.5 * dt, state + 0.5 * dt * k2)
            k4 = rhs(t + dt, state + dt * k3)
            new = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        except (OverflowError, FloatingPointError):
            new = np.full_like(state, np.nan)
        if not np.all(np.isfinite(new)):
            raise IntegrationError(f"non-finite state after t = {t:.17g}")
        state = new
        states[j + 1] = state
    p = np.empty((steps + 1, s.C))
    for j in range(steps + 1):
        p[j] = momenta(ts[j], states[j, : s.k], states[j, s.k :])[1]
    grid = Grid((t0,), (t1,), (steps + 1,))
    return DiscreteCurve(s, grid, states[:, : s.k], p, H.choice, float(h))


# -- solution n-vectors at a point -------------------------------------------------------


@dataclass
class HamiltonSolutionSpace:
    """Affine space of tangent families (t_1, ..., t_n) solving the Hamilton equation at m.

    Every member is ``horizontal + particular + sum c_j kernel[j]`` where the
    last two live on momentum axes only. Arrays are (n, N + C); kernel is a
    list of such arrays.
    """

    shape: ProblemShape
    choice: SubmanifoldChoice
    q: np.ndarray
    p: np.ndarray
    dH: np.ndarray
    horizontal: np.ndarray
    particular: np.ndarray
    kernel: np.ndarray

    def member(self, coeffs=None) -> np.ndarray:
        t = self.horizontal + self.particular
        if coeffs is not None and len(self.kernel):
            t = t + np.tensordot(np.asarray(coeffs, dtype=float), self.kernel, axes=1)
        return t

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        return self.member(scale * rng.standard_normal(len(self.kernel)))

    def residual(self, tangents: np.ndarray) -> float:
        return _point_residual(self.shape, self.choice, tangents, self.dH)


def _point_residual(shape, choice, tangents, dH) -> float:
    act = active_axes(shape, choice)
    lhs = _kernels.contract_omega(np.asarray(tangents)[None], shape.index_table, act[shape.N :], shape.N)[0]
    return float(np.max(np.abs((lhs - _sign_n(shape.n) * dH) * act)))


def _horizontal_part(shape: ProblemShape, dp: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Base-point parts (n, N) of the tangents, read off from d_p H.

    The dq-projection of a solution is c * lift(w) with c = dH/de; it must be
    decomposable, otherwise no solution exists.
    """
    c = dp[shape.omega_position]
    if abs(c) <= tol * max(1.0, float(np.max(np.abs(dp)))):
        raise HamiltonError("dH/de vanishes: no n-vector with <X, omega> != 0 solves the equation")
    w = shape.single_signs * dp[shape.single_positions] / c
    z = lift_dense(w)
    if np.max(np.abs(c * z - dp)) > tol * max(1.0, float(np.max(np.abs(dp)))):
        raise HamiltonError("d_p H is not decomposable: the Hamilton equation has no solution here")
    T = np.zeros((shape.n, shape.N))
    T[:, : shape.n] = np.eye(shape.n)
    T[:, shape.n :] = w.T
    T[0] *= c
    return T


def hamilton_solution_space(H: HamiltonianFunction, q, p) -> HamiltonSolutionSpace:
    s = H.shape
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    _, dq, dp = H.gradient(q, p)
    dH = np.concatenate([dq, dp])
    D = s.N + s.C
    act = active_axes(s, H.choice)
    horiz = np.zeros((s.n, D))
    horiz[:, : s.N] = _horizontal_part(s, dp)
    target = (_sign_n(s.n) * dH) * act
    base = _kernels.contract_omega(horiz[None], s.index_table, act[s.N :], s.N)[0] * act
    # the contraction is affine in the momentum parts of the tangents
    unknowns = [(mu, s.N + a) for mu in range(s.n) for a in range(s.C) if act[s.N + a]]
    stack = np.repeat(horiz[None], len(unknowns), axis=0)
    for j, (mu, col) in enumerate(unknowns):
        stack[j, mu, col] += 1.0
    cols = (_kernels.contract_omega(stack, s.index_table, act[s.N :], s.N) * act[None, :] - base).T
    rhs = target - base
    sol, *_ = np.linalg.lstsq(cols, rhs, rcond=None)
    if np.max(np.abs(cols @ sol - rhs)) > 1e-9 * max(1.0, float(np.max(np.abs(rhs)))):
        raise HamiltonError("the Hamilton equation has no solution with this horizontal part")
    ns = null_space(cols)

    def as_tangents(vec):
        out = np.zeros((s.n, D))
        for j, (mu, col) in enumerate(unknowns):
            out[mu, col] = vec[j]
        return out

    particular = as_tangents(sol)
    kernel = np.array([as_tangents(r) for r in ns]) if len(ns) else np.zeros((0, s.n, D))
    return HamiltonSolutionSpace(s, H.choice, q, p, dH, horiz, particular, kernel)


@dataclass
class NVectorFamily:
    """Solutions X_mu = d/dq^mu - (dH/dq^mu) d/dp_{1..n} + M_mu + R_mu in adapted coordinates.

    ``M[mu, nu, beta]`` multiplies the single-index axis p_{1..^nu..n beta}
    (with sign (-1)^(n+nu)); traces sum_mu M[mu, mu, beta] = -dH/dy^beta.
    ``R`` holds the free components along axes with two or more fiber indices.
    """

    shape: ProblemShape
    choice: SubmanifoldChoice
    q: np.ndarray
    p: np.ndarray
    dH: np.ndarray
    X0: np.ndarray
    higher_axes: np.ndarray
    tol: float = 1e-10

    def _single_axis(self, nu: int, beta: int) -> tuple[int, float]:
        """Ambient column and sign of the raw index (1..^nu..n, n+beta)."""
        s = self.shape
        raw = [a for a in range(1, s.n + 1) if a != nu + 1] + [s.n + beta + 1]
        return s.N + s.position[tuple(sorted(raw))], float(permutation_sign(raw))

    def trace_target(self) -> np.ndarray:
        return -self.dH[self.shape.n : self.shape.N]

    def tangents(self, M=None, R=None, check: bool = True) -> np.ndarray:
        s = self.shape
        t = self.X0.copy()
        if M is not None:
            M = np.asarray(M, dtype=float).reshape(s.n, s.n, s.k)
            if np.max(np.abs(np.einsum("mmb->b", M) - self.trace_target())) > 1e-12 * max(
                1.0, float(np.max(np.abs(M)))
            ):
                raise HamiltonError("M violates the trace constraint sum_mu M[mu, mu, beta] = -dH/dy^beta")
            for mu in range(s.n):
                for nu in range(s.n):
                    for beta in range(s.k):
                        col, sg = self._single_axis(nu, beta)
                        t[mu, col] += _sign_n(s.n + nu + 1) * sg * M[mu, nu, beta]
        elif np.any(self.trace_target() != 0.0):
            raise HamiltonError("M is required when dH/dy does not vanish")
        if R is not None:
            R = np.asarray(R, dtype=float).reshape(s.n, len(self.higher_axes))
            t[:, self.higher_axes] += R
        if check:
            res = _point_residual(s, self.choice, t, self.dH)
            if res > self.tol * max(1.0, float(np.max(np.abs(t)))):
                raise HamiltonError(f"family member fails the Hamilton equation (residual {res:.3g})")
        return t

    def special(self) -> np.ndarray:
        """M[0, 0, beta] = -dH/dy^beta, every other free component 0."""
        M = np.zeros((self.shape.n, self.shape.n, self.shape.k))
        M[0, 0, :] = self.trace_target()
        return self.tangents(M)

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Random admissible (M, R) and the corresponding tangents."""
        s = self.shape
        M = scale * rng.standard_normal((s.n, s.n, s.k))
        tr = np.einsum("mmb->b", M)
        M[np.arange(s.n), np.arange(s.n), :] += (self.trace_target() - tr)[None, :] / s.n
        R = scale * rng.standard_normal((s.n, len(self.higher_axes)))
        return M, R, self.tangents(M, R)

    def n_vector(self, tangents: np.ndarray) -> ExteriorElement:
        D = tangents.shape[1]
        return wedge_all([_ambient_vector(D, tangents[mu]) for mu in range(self.shape.n)])


def n_vector_family(H: HamiltonianFunction, q, p, tol: float = 1e-10) -> NVectorFamily:
    """Solution family at m = (q, p); requires d_p H = dp_{1..n} there."""
    s = H.shape
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    _, dq, dp = H.gradient(q, p)
    expect = np.zeros(s.C)
    expect[s.omega_position] = 1.0
    act = active_axes(s, H.choice)[s.N :]
    if np.max(np.abs((dp - expect) * act)) > tol:
        raise HamiltonError(
            "coordinates are not adapted at m: need dH/de = 1 and all other d_p H components 0"
        )
    dH = np.concatenate([dq, dp])
    D = s.N + s.C
    X0 = np.zeros((s.n, D))
    for mu in range(s.n):
        X0[mu, mu] = 1.0
        X0[mu, s.N + s.omega_position] = -dq[mu]
    higher = np.array([s.N + a for a in s.higher_positions if act[a]], dtype=np.intp)
    fam = NVectorFamily(s, H.choice, q, p, dH, X0, higher, tol)
    if not np.any(fam.trace_target()):
        fam.tangents()  # constant-in-y case: X0 alone must solve
    fam.special()
    return fam


# -- deformations and the Euler-Lagrange oracle ---------------------------------------------------


def deform_along_pseudofiber(
    curve: DiscreteCurve,
    density: LagrangianDensity,
    pi,
    level: float | None = None,
    tol: float = 1e-9,
) -> DiscreteCurve:
    """p -> p + pi(node) with pi in the annihilator of T_z D^omega at every node.

    ``pi`` is an array (*grid, C) or a callable (x, u, v, p) -> (C,).
    """
    s = curve.shape
    g = curve.grid.shape
    v = curve.velocities()
    x = curve.grid.points()
    if callable(pi):
        delta = np.empty(g + (s.C,))
        for node in _node_iter(curve.grid):
            delta[node] = pi(x[node], curve.u[node], v[node], curve.p[node])
    else:
        delta = np.broadcast_to(np.asarray(pi, dtype=float), g + (s.C,))
    for node in _node_iter(curve.grid):
        d = delta[node]
        if not np.any(d):
            continue
        Q = np.array([a.to_dense() for a in annihilator(tangent_basis_omega(as_velocity(v[node], s)))])
        resid = d - Q.T @ (Q @ d)
        if np.max(np.abs(resid)) > tol * max(1.0, float(np.max(np.abs(d)))):
            raise HamiltonError(
                f"deformation at node {node} leaves the enlarged pseudofiber (projection residual {np.max(np.abs(resid)):.3g})"
            )
    return DiscreteCurve(s, curve.grid, curve.u, curve.p + delta, SubmanifoldChoice.FULL, level, curve.v)


def euler_lagrange_residual(density: LagrangianDensity, u, grid: Grid, du=None) -> np.ndarray:
    """sum_mu D_mu (dl/dv^i_mu) - dl/dy^i at every node, shape (*grid, k)."""
    s = density.shape
    u = np.asarray(u, dtype=float).reshape(grid.shape + (s.k,))
    v = grid_derivative(u, grid) if du is None else np.asarray(du, dtype=float).reshape(grid.shape + (s.k, s.n))
    x = grid.points()
    lv = np.empty(grid.shape + (s.k, s.n))
    ly = np.empty(grid.shape + (s.k,))
    for node in _node_iter(grid):
        lv[node] = grad_v(density, x[node], u[node], v[node])
        ly[node] = grad_q(density, x[node], u[node], v[node])[1]
    div = np.zeros(grid.shape + (s.k,))
    for mu, ax in enumerate(grid.axes):
        div += np.gradient(lv[..., mu], ax, axis=mu, edge_order=2)
    return div - ly


def order_estimate(coarse: float, fine: float, ratio: float = 2.0) -> float:
    """Observed convergence order between two grids whose spacing differs by ``ratio``."""
    tiny = 1e-300
    return math.log(max(coarse, tiny) / max(fine, tiny)) / math.log(ratio)


def critical_verdict(coarse: float, fine: float, abs_tol: float = 1e-9, min_order: float = 1.5) -> bool:
    """A residual sequence indicates a solution if it is at round-off or converges at order >= min_order."""
    return fine <= abs_tol or order_estimate(coarse, fine) >= min_order
