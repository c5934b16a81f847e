"""The Legendre correspondence between velocities and multimomenta.

Base points ``q`` are arrays of length n + k (x first, then y). Momenta are
:class:`MomentumPoint` objects holding a dense covector over
``shape.momentum_indices``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exterior import COVECTOR, ExteriorElement
from .grassmann import (
    NULL_RTOL,
    ProblemShape,
    annihilator,
    as_velocity,
    lift_dense,
    lift_hessian_dense,
    null_space,
    tangent_basis_full,
    tangent_basis_omega,
    tangent_dense_omega,
)
from .lagrangian import LagrangianDensity, eval_density, grad_q, grad_v, hessian_vv

__all__ = [
    "SubmanifoldChoice",
    "MomentumPoint",
    "LegendreReport",
    "PseudofiberSpace",
    "LegendreError",
    "DegenerateError",
    "ConvergenceError",
    "split_q",
    "w_eval",
    "w_derivatives",
    "ddw_transform",
    "dedecker_transform",
    "hamiltonian_eval",
    "hamiltonian_gradient",
    "enlarged_pseudofiber",
    "pseudofiber_level",
    "degeneracy_report",
    "singular_locus",
    "COND_LIMIT",
]

COND_LIMIT = 1e12
NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 50


class LegendreError(RuntimeError):
    pass


class DegenerateError(LegendreError):
    """The Legendre map is singular at the requested point."""


class ConvergenceError(LegendreError):
    """Newton did not converge: the point is outside the correspondence domain."""


class SubmanifoldChoice(str, enum.Enum):
    DDW = "dDW"
    FULL = "full"

    @classmethod
    def parse(cls, value) -> "SubmanifoldChoice":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for c in cls:
            if c.value.lower() == text:
                return c
        raise ValueError(f"unknown submanifold choice {value!r} (use dDW or full)")


def split_q(shape: ProblemShape, q) -> tuple[np.ndarray, np.ndarray]:
    q = np.zeros(shape.N) if q is None else np.asarray(q, dtype=float).reshape(-1)
    if q.shape != (shape.N,):
        raise ValueError(f"base point must have {shape.N} coordinates, got {q.shape[0]}")
    return q[: shape.n], q[shape.n :]


@dataclass(frozen=True)
class MomentumPoint:
    """A point (q, p) with p a dense n-covector over the momentum multi-indices."""

    shape: ProblemShape
    q: np.ndarray
    p: np.ndarray
    choice: SubmanifoldChoice = SubmanifoldChoice.FULL

    def __post_init__(self):
        q = np.zeros(self.shape.N) if self.q is None else np.asarray(self.q, dtype=float).reshape(-1)
        p = np.asarray(self.p, dtype=float).reshape(-1)
        if q.shape != (self.shape.N,):
            raise ValueError(f"q must have {self.shape.N} coordinates")
        if p.shape != (self.shape.C,):
            raise ValueError(f"p must have {self.shape.C} components")
        choice = SubmanifoldChoice.parse(self.choice)
        if choice is SubmanifoldChoice.DDW and np.any(p[self.shape.higher_positions] != 0.0):
            raise ValueError("dDW momenta must have all higher components equal to 0")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "choice", choice)

    @classmethod
    def from_coordinates(
        cls,
        shape: ProblemShape,
        e: float,
        P,
        higher=None,
        q=None,
        choice=SubmanifoldChoice.FULL,
    ) -> "MomentumPoint":
        """Build from e, P[i, mu] = p^mu_i and the higher components."""
        p = np.zeros(shape.C)
        p[shape.omega_position] = e
        P = np.asarray(P, dtype=float).reshape(shape.k, shape.n)
        p[shape.single_positions] = shape.single_signs * P
        if higher is not None:
            p[shape.higher_positions] = np.broadcast_to(
                np.asarray(higher, dtype=float), shape.higher_positions.shape
            )
        return cls(shape, q, p, choice)

    @property
    def e(self) -> float:
        return float(self.p[self.shape.omega_position])

    @property
    def P(self) -> np.ndarray:
        """Single-index components as P[i, mu] = p^mu_i."""
        return self.shape.single_signs * self.p[self.shape.single_positions]

    @property
    def higher(self) -> np.ndarray:
        return self.p[self.shape.higher_positions].copy()

    def with_p(self, p) -> "MomentumPoint":
        return MomentumPoint(self.shape, self.q, p, self.choice)

    def shifted(self, lam: float) -> "MomentumPoint":
        """p + lam * omega."""
        p = self.p.copy()
        p[self.shape.omega_position] += lam
        return self.with_p(p)

    def to_exterior(self) -> ExteriorElement:
        return ExteriorElement.from_dense(self.shape.N, self.shape.n, COVECTOR, self.p)


@dataclass
class LegendreReport:
    solvable: bool
    rank: int
    condition: float
    kernel_basis: list = field(default_factory=list)
    message: str = ""


@dataclass
class PseudofiberSpace:
    """Affine space point + span(directions); directions are n-covectors."""

    point: MomentumPoint
    directions: list

    @property
    def dimension(self) -> int:
        return len(self.directions)

    def direction_matrix(self) -> np.ndarray:
        if not self.directions:
            return np.zeros((0, self.point.shape.C))
        return np.array([d.to_dense() for d in self.directions])


def _shape_of(density: LagrangianDensity, v) -> tuple[ProblemShape, np.ndarray]:
    return density.shape, as_velocity(v, density.shape).entries


def w_eval(density: LagrangianDensity, q, v, p: MomentumPoint) -> float:
    """W = <lift(v), p> - l(q, v)."""
    shape, v = _shape_of(density, v)
    x, y = split_q(shape, q)
    return float(lift_dense(v) @ p.p) - eval_density(density, x, y, v)


def w_derivatives(density: LagrangianDensity, q, v, p: MomentumPoint) -> tuple[float, np.ndarray, np.ndarray]:
    """W, its v-gradient and v-Hessian (rows ordered like ``v.ravel()``)."""
    shape, v = _shape_of(density, v)
    x, y = split_q(shape, q)
    w = float(lift_dense(v) @ p.p) - eval_density(density, x, y, v)
    g = tangent_dense_omega(v) @ p.p - grad_v(density, x, y, v).ravel()
    H = lift_hessian_dense(v) @ p.p - hessian_vv(density, x, y, v)
    return w, g, H


def singular_locus(density: LagrangianDensity, choice=SubmanifoldChoice.FULL) -> str:
    """Human-readable description of where the Legendre map of a built-in degenerates."""
    choice = SubmanifoldChoice.parse(choice)
    name = density.name
    if choice is SubmanifoldChoice.FULL and density.shape == ProblemShape(2, 2):
        if name == "trivial":
            return "r = 0"
        if name == "dirichlet":
            return f"r - B = +1 or -1 (B = {density.params.get('B', 0.0):g})"
        if name == "maxwell2d":
            return "r = 0 or r = -2"
    if choice is SubmanifoldChoice.DDW:
        if name == "maxwell2d":
            return "everywhere (the dDW Hessian has rank 1)"
        if name == "dirichlet":
            return "B = +1 or -1"
        if name == "trivial":
            return "everywhere (l = 0)"
    return "singular Hessian of W in v"


def _rank_cond(H: np.ndarray) -> tuple[int, float, np.ndarray]:
    s = np.linalg.svd(H, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0, float("inf"), null_space(H)
    rank = int(np.sum(s > NULL_RTOL * s[0]))
    cond = float(s[0] / s[-1]) if s[-1] > 0 else float("inf")
    return rank, cond, null_space(H)


def ddw_transform(density: LagrangianDensity, q, v) -> MomentumPoint:
    """p^mu_i = dl/dv^i_mu, e = 0, higher components 0."""
    shape, v = _shape_of(density, v)
    x, y = split_q(shape, q)
    P = grad_v(density, x, y, v)
    return MomentumPoint.from_coordinates(shape, 0.0, P, None, q, SubmanifoldChoice.DDW)


def _higher_array(shape: ProblemShape, higher) -> np.ndarray:
    m = shape.higher_positions.size
    if higher is None:
        return np.zeros(m)
    h = np.asarray(higher, dtype=float).reshape(-1)
    if h.size == 1 and m != 1:
        h = np.full(m, float(h[0]))
    if h.shape != (m,):
        raise ValueError(f"expected {m} higher components, got {h.size}")
    return h


def dedecker_transform(
    density: LagrangianDensity, q, v, higher=None
) -> tuple[MomentumPoint, LegendreReport]:
    """Solve <dz/dv^i_mu, p> = dl/dv^i_mu for the p^mu_i with the higher components fixed."""
    shape, v = _shape_of(density, v)
    x, y = split_q(shape, q)
    hi = _higher_array(shape, higher)
    rows = tangent_dense_omega(v)  # (nk, C)
    p_fixed = np.zeros(shape.C)
    p_fixed[shape.higher_positions] = hi
    rhs = grad_v(density, x, y, v).ravel() - rows @ p_fixed
    # column for unknown p^nu_j is the pairing with its signed basis covector
    cols = (rows[:, shape.single_positions.ravel()] * shape.single_signs.ravel()[None, :])
    rank, cond, kernel = _rank_cond(cols)
    report = LegendreReport(rank == shape.nk, rank, cond, list(kernel), "")
    if rank < shape.nk:
        report.message = "linear system for the single-index momenta is singular"
        sol = np.linalg.lstsq(cols, rhs, rcond=None)[0]
    else:
        sol = np.linalg.solve(cols, rhs)
        report.message = "ok"
    choice = SubmanifoldChoice.DDW if not np.any(hi) else SubmanifoldChoice.FULL
    mp = MomentumPoint.from_coordinates(shape, 0.0, sol.reshape(shape.k, shape.n), hi, q, choice)
    return mp, report


def hamiltonian_eval(
    density: LagrangianDensity,
    q,
    p: MomentumPoint,
    v0=None,
    max_iter: int = NEWTON_MAX_ITER,
    tol: float = NEWTON_TOL,
) -> tuple[float, np.ndarray]:
    """H(q, p) = W(q, z, p) at the velocity z = lift(v) corresponding to p.

    Damped Newton on grad_v W = 0; returns (H, v).
    """
    shape = density.shape
    if p.shape != shape:
        raise ValueError("momentum point and density have different shapes")
    q = p.q if q is None else q
    v = np.zeros((shape.k, shape.n)) if v0 is None else as_velocity(v0, shape).entries.copy()
    scale = max(1.0, float(np.max(np.abs(p.p))))
    w, g, H = w_derivatives(density, q, v, p)
    for _ in range(max_iter + 1):
        res = float(np.max(np.abs(g)))
        if res <= tol * scale:
            rank, cond, _ = _rank_cond(H)
            if cond > COND_LIMIT:
                raise DegenerateError(
                    f"degenerate point: Legendre Jacobian has condition {cond:.3g}; "
                    f"singular locus {singular_locus(density, p.choice)}"
                )
            return w, v
        rank, cond, _ = _rank_cond(H)
        if cond > COND_LIMIT:
            raise DegenerateError(
                f"degenerate point: Legendre Jacobian has condition {cond:.3g}; "
                f"singular locus {singular_locus(density, p.choice)}"
            )
        step = np.linalg.solve(H, -g).reshape(v.shape)
        t = 1.0
        for _ in range(40):
            v_try = v + t * step
            w_t, g_t, H_t = w_derivatives(density, q, v_try, p)
            if np.max(np.abs(g_t)) < res or t < 1e-10:
                break
            t *= 0.5
        v, w, g, H = v_try, w_t, g_t, H_t
    raise ConvergenceError(
        f"outside correspondence domain: Newton residual {float(np.max(np.abs(g))):.3g} after {max_iter} iterations"
    )


def hamiltonian_gradient(
    density: LagrangianDensity, q, p: MomentumPoint, v0=None
) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """(H, d_q H, d_p H, v) with d_p H = lift(v) and d_q H = -dl/dq at v (flat chart)."""
    shape = density.shape
    q = p.q if q is None else np.asarray(q, dtype=float)
    h, v = hamiltonian_eval(density, q, p, v0)
    x, y = split_q(shape, q)
    lx, ly = grad_q(density, x, y, v)
    return h, -np.concatenate([lx, ly]), lift_dense(v), v


def enlarged_pseudofiber(density: LagrangianDensity, q, v, higher=None) -> PseudofiberSpace:
    """P_q(z): a particular momentum plus the annihilator of T_z D^omega."""
    p0, _ = dedecker_transform(density, q, v, higher)
    return PseudofiberSpace(p0, annihilator(tangent_basis_omega(as_velocity(v, density.shape))))


def pseudofiber_level(density: LagrangianDensity, q, v, h: float, higher=None) -> PseudofiberSpace:
    """P^h_q(z): shift a particular momentum by lambda*omega onto the level h."""
    vm = as_velocity(v, density.shape)
    p0, _ = dedecker_transform(density, q, vm, higher)
    h0, _ = hamiltonian_eval(density, q, p0, v0=vm.entries)
    point = p0.shifted(float(h) - h0)
    return PseudofiberSpace(point, annihilator(tangent_basis_full(vm)))


def degeneracy_report(
    density: LagrangianDensity, q, v, choice=SubmanifoldChoice.DDW, higher=None
) -> LegendreReport:
    """Rank and conditioning of the Legendre map at v.

    dDW: the Hessian of l in v. full: the Hessian of W in v at the momenta
    obtained with the supplied higher components.
    """
    choice = SubmanifoldChoice.parse(choice)
    shape, v = _shape_of(density, v)
    if choice is SubmanifoldChoice.DDW:
        x, y = split_q(shape, q)
        H = hessian_vv(density, x, y, v)
    else:
        p, _ = dedecker_transform(density, q, v, higher)
        _, _, H = w_derivatives(density, q, v, p)
    rank, cond, kernel = _rank_cond(H)
    solvable = rank == shape.nk and cond <= COND_LIMIT
    msg = "regular" if solvable else f"degenerate; singular locus {singular_locus(density, choice)}"
    return LegendreReport(solvable, rank, cond, list(kernel), msg)
