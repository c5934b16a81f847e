"""Decomposable n-vectors in the graph chart over the base axes.

Axis labels: ``1..n`` are the base coordinates x^mu, ``n+1..n+k`` the fiber
coordinates y^i. Momenta in Lambda^n T*N are dense vectors over
``shape.momentum_indices`` (lexicographic multi-indices).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Sequence

import numpy as np

from . import _kernels
from .exterior import (
    COVECTOR,
    VECTOR,
    ExteriorElement,
    ExteriorError,
    basis_indices,
    permutation_sign,
)

__all__ = [
    "ProblemShape",
    "VelocityMatrix",
    "as_velocity",
    "lift",
    "lift_dense",
    "lift_generic",
    "tangent_basis_omega",
    "tangent_basis_full",
    "tangent_dense_omega",
    "lift_hessian_dense",
    "annihilator",
    "null_space",
    "is_decomposable_2",
    "plucker_residual",
    "generator_full_2x2",
    "generators_omega_2x2",
    "NULL_RTOL",
]

NULL_RTOL = 1e-12


@dataclass(frozen=True)
class ProblemShape:
    """Base dimension ``n`` and fiber dimension ``k``."""

    n: int
    k: int

    def __post_init__(self):
        if int(self.n) < 1 or int(self.k) < 1:
            raise ValueError(f"shape needs n >= 1 and k >= 1, got ({self.n}, {self.k})")

    @property
    def N(self) -> int:
        return self.n + self.k

    @property
    def C(self) -> int:
        return comb(self.N, self.n)

    @property
    def nk(self) -> int:
        return self.n * self.k

    @cached_property
    def momentum_indices(self) -> list[tuple[int, ...]]:
        return basis_indices(self.N, self.n)

    @cached_property
    def index_table(self) -> np.ndarray:
        """(C, n) array of 0-based axis rows, one per momentum multi-index."""
        return np.array(self.momentum_indices, dtype=np.intp) - 1

    @cached_property
    def position(self) -> dict[tuple[int, ...], int]:
        return {idx: a for a, idx in enumerate(self.momentum_indices)}

    def fiber_count(self, idx: Sequence[int]) -> int:
        return sum(1 for a in idx if a > self.n)

    @cached_property
    def omega_position(self) -> int:
        """Position of the multi-index (1, ..., n), i.e. of e = p_{1..n}."""
        return self.position[tuple(range(1, self.n + 1))]

    @cached_property
    def single_positions(self) -> np.ndarray:
        """(k, n) positions of the components p^mu_i."""
        out = np.empty((self.k, self.n), dtype=np.intp)
        for i in range(self.k):
            for mu in range(self.n):
                out[i, mu] = self.position[self.single_index(mu + 1, i + 1)[0]]
        return out

    @cached_property
    def single_signs(self) -> np.ndarray:
        """(k, n) signs with p^mu_i = sign * p_{sorted index}."""
        out = np.empty((self.k, self.n))
        for i in range(self.k):
            for mu in range(self.n):
                out[i, mu] = self.single_index(mu + 1, i + 1)[1]
        return out

    def single_index(self, mu: int, i: int) -> tuple[tuple[int, ...], int]:
        """Sorted multi-index and sign of p^mu_i = p_{1..(mu-1) (n+i) (mu+1)..n}."""
        raw = list(range(1, self.n + 1))
        raw[mu - 1] = self.n + i
        return tuple(sorted(raw)), permutation_sign(raw)

    @cached_property
    def higher_positions(self) -> np.ndarray:
        """Positions of components with at least two fiber indices."""
        return np.array(
            [a for a, idx in enumerate(self.momentum_indices) if self.fiber_count(idx) >= 2],
            dtype=np.intp,
        )

    @cached_property
    def ddw_active(self) -> np.ndarray:
        """Mask of momentum axes kept on the de Donder-Weyl submanifold."""
        return np.array(
            [self.fiber_count(idx) <= 1 for idx in self.momentum_indices], dtype=bool
        )

    def momentum_label(self, a: int) -> str:
        return "p_" + "".join(str(i) for i in self.momentum_indices[a])


@dataclass(frozen=True)
class VelocityMatrix:
    """Entries ``v[i, mu]`` of v = sum v^i_mu dy^i (x) dx^mu (0-based)."""

    shape: ProblemShape
    entries: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.shape != (self.shape.k, self.shape.n):
            raise ValueError(
                f"velocity must have shape (k, n) = ({self.shape.k}, {self.shape.n}), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("velocity entries must be finite")
        object.__setattr__(self, "entries", arr)


def as_velocity(v, shape: ProblemShape | None = None) -> VelocityMatrix:
    if isinstance(v, VelocityMatrix):
        return v
    arr = np.atleast_2d(np.asarray(v, dtype=float))
    if shape is None:
        shape = ProblemShape(arr.shape[1], arr.shape[0])
    return VelocityMatrix(shape, arr)


def _graph_matrix(v: np.ndarray) -> np.ndarray:
    k, n = v.shape
    return np.vstack([np.eye(n), v])


def lift_dense(v) -> np.ndarray:
    """Components z^A = det T[A, :] of the lift, T = [I; v]."""
    vm = as_velocity(v)
    T = _graph_matrix(vm.entries)
    return _kernels.plucker_minors(T[None], vm.shape.index_table)[0]


def lift(v) -> ExteriorElement:
    vm = as_velocity(v)
    return ExteriorElement.from_dense(vm.shape.N, vm.shape.n, VECTOR, lift_dense(vm))


def _det_generic(M: list[list]) -> object:
    """Leibniz determinant for entries of any ring type (floats or duals)."""
    n = len(M)
    total = 0.0
    for perm in itertools.permutations(range(n)):
        term = float(permutation_sign(perm))
        for r, c in enumerate(perm):
            term = term * M[r][c]
        total = total + term
    return total


def lift_generic(v_entries, shape: ProblemShape) -> list:
    """Lift components for a nested list ``v[i][mu]`` of generic scalars."""
    n = shape.n
    rows = []
    for a in range(n):
        rows.append([1.0 if b == a else 0.0 for b in range(n)])
    for i in range(shape.k):
        rows.append([v_entries[i][mu] for mu in range(n)])
    out = []
    for idx in shape.momentum_indices:
        out.append(_det_generic([rows[a - 1] for a in idx]))
    return out


def tangent_dense_omega(v) -> np.ndarray:
    """(nk, C) array of dz/dv^i_mu, rows ordered like ``v.ravel()``.

    Product rule: differentiating the mu-th factor replaces it by d/dy^i.
    """
    vm = as_velocity(v)
    shape = vm.shape
    T = _graph_matrix(vm.entries)
    stack = np.empty((shape.nk, shape.N, shape.n))
    for i in range(shape.k):
        for mu in range(shape.n):
            Tm = T.copy()
            Tm[:, mu] = 0.0
            Tm[shape.n + i, mu] = 1.0
            stack[i * shape.n + mu] = Tm
    return _kernels.plucker_minors(stack, shape.index_table)


def lift_hessian_dense(v) -> np.ndarray:
    """(nk, nk, C) array of second derivatives of the lift in v.

    Differentiating factors mu != nu replaces both; the same factor twice gives 0.
    """
    vm = as_velocity(v)
    shape = vm.shape
    n, nk = shape.n, shape.nk
    T = _graph_matrix(vm.entries)
    out = np.zeros((nk, nk, shape.C))
    pairs, stack = [], []
    for a in range(nk):
        i, mu = divmod(a, n)
        for b in range(a + 1, nk):
            j, nu = divmod(b, n)
            if mu == nu:
                continue
            Tm = T.copy()
            Tm[:, mu] = 0.0
            Tm[:, nu] = 0.0
            Tm[n + i, mu] = 1.0
            Tm[n + j, nu] = 1.0
            pairs.append((a, b))
            stack.append(Tm)
    if stack:
        vals = _kernels.plucker_minors(np.array(stack), shape.index_table)
        for (a, b), row in zip(pairs, vals):
            out[a, b] = row
            out[b, a] = row
    return out


def _check_rank(rows: np.ndarray, expected: int) -> None:
    s = np.linalg.svd(rows, compute_uv=False)
    rank = int(np.sum(s > NULL_RTOL * s[0])) if s.size else 0
    if rank != expected:
        raise RuntimeError(f"tangent basis has rank {rank}, expected {expected}")


def tangent_basis_omega(v) -> list[ExteriorElement]:
    vm = as_velocity(v)
    rows = tangent_dense_omega(vm)
    _check_rank(rows, vm.shape.nk)
    return [ExteriorElement.from_dense(vm.shape.N, vm.shape.n, VECTOR, r) for r in rows]


def tangent_basis_full(v) -> list[ExteriorElement]:
    """Tangent basis of D^omega plus the scaling direction z."""
    vm = as_velocity(v)
    rows = np.vstack([tangent_dense_omega(vm), lift_dense(vm)[None]])
    _check_rank(rows, vm.shape.nk + 1)
    return [ExteriorElement.from_dense(vm.shape.N, vm.shape.n, VECTOR, r) for r in rows]


def null_space(rows: np.ndarray, ncols: int | None = None) -> np.ndarray:
    """Orthonormal basis (as rows) of {x : rows @ x = 0}."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if ncols is None:
        ncols = rows.shape[1]
    if rows.size == 0:
        return np.eye(ncols)
    _, s, vt = np.linalg.svd(rows, full_matrices=True)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(ncols)
    rank = int(np.sum(s > NULL_RTOL * s[0]))
    return vt[rank:]


def annihilator(basis: Sequence[ExteriorElement], degree: int | None = None, shape=None) -> list[ExteriorElement]:
    """Basis of the covectors of the same degree killing every element of ``basis``."""
    if not basis:
        raise ExteriorError("annihilator needs at least one vector")
    dim, deg = basis[0].dimension, basis[0].degree
    if degree is not None and degree != deg:
        raise ExteriorError(f"basis has degree {deg}, expected {degree}")
    if shape is not None and shape.N != dim:
        raise ExteriorError(f"basis lives in dimension {dim}, shape has {shape.N}")
    for b in basis:
        if b.dimension != dim or b.degree != deg:
            raise ExteriorError("basis elements must share dimension and degree")
        if b.variance != VECTOR:
            raise ExteriorError("annihilator expects multivectors")
    rows = np.array([b.to_dense() for b in basis])
    ns = null_space(rows)
    return [ExteriorElement.from_dense(dim, deg, COVECTOR, r) for r in ns]


def plucker_residual(X: ExteriorElement) -> float:
    """Largest |X^ab X^cd - X^ac X^bd + X^ad X^bc| over a<b<c<d."""
    if X.degree != 2:
        raise ExteriorError(f"decomposability is only implemented for degree 2, got {X.degree}")
    worst = 0.0
    for a, b, c, d in itertools.combinations(range(1, X.dimension + 1), 4):
        r = X[a, b] * X[c, d] - X[a, c] * X[b, d] + X[a, d] * X[b, c]
        worst = max(worst, abs(r))
    return worst


def is_decomposable_2(X: ExteriorElement) -> tuple[bool, float]:
    """Plucker test; returns (verdict, unnormalized residual)."""
    res = plucker_residual(X)
    scale = X.max_abs()
    return bool(res <= 1e-10 * scale * scale), res


def _eps(i: int, j: int) -> int:
    return 0 if i == j else (1 if i < j else -1)


def generator_full_2x2(v) -> ExteriorElement:
    """Closed-form generator of (T_z D^2)^perp for n = k = 2.

    det(v) dx1^dx2 - eps_ij v^j_nu dy^i^dx^nu + dy1^dy2
    """
    vm = as_velocity(v, ProblemShape(2, 2))
    v = vm.entries
    out = ExteriorElement(4, 2, COVECTOR, {(1, 2): float(np.linalg.det(v)), (3, 4): 1.0})
    for i in range(2):
        for j in range(2):
            e = _eps(i, j)
            if not e:
                continue
            for nu in range(2):
                # dy^i ^ dx^nu = -(dx^nu ^ dy^i)
                key = (nu + 1, 3 + i)
                out = out.with_term(key, out[key] + e * v[j, nu])
    return out


def generators_omega_2x2(v) -> list[ExteriorElement]:
    """Generators of (T_z D^omega)^perp for n = k = 2."""
    return [generator_full_2x2(v), ExteriorElement(4, 2, COVECTOR, {(1, 2): 1.0})]
