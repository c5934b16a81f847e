"""Sparse exterior algebra over a fixed finite-dimensional model space.

Axes are labelled ``1..dimension``. A multi-index is a strictly increasing
tuple of axis labels; the empty tuple is the degree-0 (scalar) component.
Vectors (multivectors) and covectors (forms) share one container type,
distinguished by ``variance``.

The pairing between a k-vector and an l-form follows the convention
``<X1 ^ ... ^ Xk, mu> = mu(X1, ..., Xk)`` when ``k == l`` and 0 otherwise, so
``<d1 ^ d2, dx1 ^ dx2> = 1``. The two interior products are fixed by

    <Y, X _| mu> = <X ^ Y, mu>        (interior_left)
    <X |_ mu, nu> = <X, mu ^ nu>      (interior_right)
"""

from __future__ import annotations

import itertools
import json
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "ExteriorError",
    "ExteriorElement",
    "VECTOR",
    "COVECTOR",
    "basis_indices",
    "check_multi_index",
    "permutation_sign",
    "basis",
    "zero",
    "scalar",
    "wedge",
    "wedge_all",
    "pair",
    "interior_left",
    "interior_right",
]

VECTOR = "vector"
COVECTOR = "covector"
_VARIANCES = (VECTOR, COVECTOR)


class ExteriorError(ValueError):
    """Raised on dimension, degree or variance mismatches."""


def basis_indices(dimension: int, degree: int) -> list[tuple[int, ...]]:
    """All multi-indices of ``degree`` over ``1..dimension``, lexicographic."""
    return list(itertools.combinations(range(1, dimension + 1), degree))


def check_multi_index(indices: Sequence[int], dimension: int) -> tuple[int, ...]:
    idx = tuple(int(i) for i in indices)
    for a, b in zip(idx, idx[1:]):
        if a >= b:
            raise ExteriorError(f"multi-index {idx} is not strictly increasing")
    if idx and (idx[0] < 1 or idx[-1] > dimension):
        raise ExteriorError(f"multi-index {idx} out of range 1..{dimension}")
    return idx


def permutation_sign(seq: Sequence[int]) -> int:
    """Parity of the permutation sorting ``seq``; 0 if an entry repeats."""
    if len(set(seq)) != len(seq):
        return 0
    inversions = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inversions += 1
    return -1 if inversions % 2 else 1


class ExteriorElement:
    """Immutable homogeneous element of the exterior algebra.

    ``terms`` maps increasing multi-indices to nonzero float coefficients and
    is kept in lexicographic order. Exact zeros are pruned (no epsilon).
    """

    __slots__ = ("_dimension", "_degree", "_variance", "_terms")

    def __init__(
        self,
        dimension: int,
        degree: int,
        variance: str,
        terms: Mapping[Sequence[int], float] | Iterable[tuple[Sequence[int], float]] = (),
    ):
        if variance not in _VARIANCES:
            raise ExteriorError(f"variance must be one of {_VARIANCES}, got {variance!r}")
        if dimension < 0 or degree < 0:
            raise ExteriorError(f"negative dimension or degree: {dimension}, {degree}")
        items = list(terms.items() if isinstance(terms, Mapping) else terms)
        if degree > dimension and items:
            # only the zero element exists above top degree
            raise ExteriorError(f"degree {degree} exceeds dimension {dimension}")
        acc: dict[tuple[int, ...], float] = {}
        for idx, coeff in items:
            idx = check_multi_index(idx, dimension)
            if len(idx) != degree:
                raise ExteriorError(f"multi-index {idx} has length != degree {degree}")
            acc[idx] = acc.get(idx, 0.0) + float(coeff)
        self._dimension = int(dimension)
        self._degree = int(degree)
        self._variance = variance
        self._terms = {k: acc[k] for k in sorted(acc) if acc[k] != 0.0}

    # -- accessors -------------------------------------------------------
    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def degree(self) -> int:
        return self._degree

    @property
    def variance(self) -> str:
        return self._variance

    @property
    def terms(self) -> Mapping[tuple[int, ...], float]:
        return dict(self._terms)

    def __getitem__(self, idx: Sequence[int]) -> float:
        return self._terms.get(tuple(idx), 0.0)

    def __iter__(self) -> Iterator[tuple[tuple[int, ...], float]]:
        return iter(self._terms.items())

    def __len__(self) -> int:
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def max_abs(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    # -- editing (returns new elements) ------------------------------------
    def _like(self, terms) -> "ExteriorElement":
        return ExteriorElement(self._dimension, self._degree, self._variance, terms)

    def with_term(self, idx: Sequence[int], coeff: float) -> "ExteriorElement":
        terms = dict(self._terms)
        terms[tuple(idx)] = float(coeff)
        return self._like(terms)

    def without_term(self, idx: Sequence[int]) -> "ExteriorElement":
        terms = dict(self._terms)
        terms.pop(tuple(idx), None)
        return self._like(terms)

    # -- linear structure ----------------------------------------------------
    def _check_same_space(self, other: "ExteriorElement") -> None:
        if not isinstance(other, ExteriorElement):
            raise TypeError(f"expected ExteriorElement, got {type(other).__name__}")
        if (self._dimension, self._degree, self._variance) != (
            other._dimension,
            other._degree,
            other._variance,
        ):
            raise ExteriorError(
                "cannot add elements of different spaces: "
                f"{(self._dimension, self._degree, self._variance)} vs "
                f"{(other._dimension, other._degree, other._variance)}"
            )

    def __add__(self, other: "ExteriorElement") -> "ExteriorElement":
        self._check_same_space(other)
        return self._like(itertools.chain(self._terms.items(), other._terms.items()))

    def __sub__(self, other: "ExteriorElement") -> "ExteriorElement":
        return self + (-1.0) * other

    def __neg__(self) -> "ExteriorElement":
        return (-1.0) * self

    def __mul__(self, alpha: float) -> "ExteriorElement":
        if isinstance(alpha, ExteriorElement):
            return NotImplemented
        a = float(alpha)
        return self._like({k: a * c for k, c in self._terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExteriorElement):
            return NotImplemented
        return (
            self._dimension == other._dimension
            and self._degree == other._degree
            and self._variance == other._variance
            and self._terms == other._terms
        )

    def __hash__(self) -> int:
        return hash((self._dimension, self._degree, self._variance, tuple(self._terms.items())))

    def __repr__(self) -> str:
        sym = "d" if self._variance == COVECTOR else "e"
        if not self._terms:
            return f"ExteriorElement(0, dim={self._dimension}, deg={self._degree}, {self._variance})"
        parts = [
            f"{c:+g}*{sym}{''.join(str(i) for i in idx) or '()'}" for idx, c in self._terms.items()
        ]
        return f"ExteriorElement({' '.join(parts)}, dim={self._dimension}, {self._variance})"

    # -- dense conversion -----------------------------------------------------
    def to_dense(self) -> np.ndarray:
        """Coefficients against ``basis_indices(dimension, degree)``."""
        index = basis_indices(self._dimension, self._degree)
        out = np.zeros(len(index))
        pos = {idx: i for i, idx in enumerate(index)}
        for idx, c in self._terms.items():
            out[pos[idx]] = c
        return out

    @classmethod
    def from_dense(
        cls, dimension: int, degree: int, variance: str, values: Sequence[float]
    ) -> "ExteriorElement":
        index = basis_indices(dimension, degree)
        values = np.asarray(values, dtype=float)
        if values.shape != (len(index),):
            raise ExteriorError(f"expected {len(index)} dense coefficients, got {values.shape}")
        return cls(dimension, degree, variance, zip(index, values.tolist()))

    # -- serialization --------------------------------------------------------
    def to_json_obj(self) -> dict:
        return {
            "dimension": self._dimension,
            "degree": self._degree,
            "variance": self._variance,
            "terms": [[list(idx), c] for idx, c in self._terms.items()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "ExteriorElement":
        return cls(
            obj["dimension"],
            obj["degree"],
            obj["variance"],
            [(tuple(idx), c) for idx, c in obj["terms"]],
        )

    @classmethod
    def from_json(cls, text: str) -> "ExteriorElement":
        return cls.from_json_obj(json.loads(text))


def basis(dimension: int, indices: Sequence[int], variance: str = VECTOR) -> ExteriorElement:
    """The basis element ``e_{i1} ^ ... ^ e_{id}`` (or ``dq^{i1} ^ ...``).

    ``indices`` need not be sorted; the permutation sign is applied.
    """
    idx = tuple(indices)
    sign = permutation_sign(idx)
    if sign == 0:
        return zero(dimension, len(idx), variance)
    return ExteriorElement(dimension, len(idx), variance, {tuple(sorted(idx)): float(sign)})


def zero(dimension: int, degree: int, variance: str = VECTOR) -> ExteriorElement:
    return ExteriorElement(dimension, degree, variance)


def scalar(dimension: int, value: float, variance: str = VECTOR) -> ExteriorElement:
    return ExteriorElement(dimension, 0, variance, {(): value})


def _merge_sign(first: tuple[int, ...], second: tuple[int, ...]) -> int:
    return permutation_sign(first + second)


def wedge(a: ExteriorElement, b: ExteriorElement) -> ExteriorElement:
    if a.dimension != b.dimension:
        raise ExteriorError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    if a.variance != b.variance:
        raise ExteriorError(f"variance mismatch: {a.variance} vs {b.variance}")
    degree = a.degree + b.degree
    if degree > a.dimension:
        return ExteriorElement(a.dimension, degree, a.variance)
    acc: dict[tuple[int, ...], float] = {}
    for ia, ca in a:
        for ib, cb in b:
            sign = _merge_sign(ia, ib)
            if sign == 0:
                continue
            key = tuple(sorted(ia + ib))
            acc[key] = acc.get(key, 0.0) + sign * ca * cb
    return ExteriorElement(a.dimension, degree, a.variance, acc)


def wedge_all(factors: Sequence[ExteriorElement]) -> ExteriorElement:
    if not factors:
        raise ExteriorError("wedge_all needs at least one factor")
    out = factors[0]
    for f in factors[1:]:
        out = wedge(out, f)
    return out


def _check_pairing(X: ExteriorElement, mu: ExteriorElement) -> None:
    if X.variance != VECTOR or mu.variance != COVECTOR:
        raise ExteriorError("expected (vector, covector) arguments")
    if X.dimension != mu.dimension:
        raise ExteriorError(f"dimension mismatch: {X.dimension} vs {mu.dimension}")


def pair(X: ExteriorElement, mu: ExteriorElement) -> float:
    """Duality evaluation; 0 when the degrees differ."""
    _check_pairing(X, mu)
    if X.degree != mu.degree:
        return 0.0
    small, large = (X, mu) if len(X) <= len(mu) else (mu, X)
    return float(sum(c * large[idx] for idx, c in small))


def _contract(inner: ExteriorElement, outer: ExteriorElement) -> dict[tuple[int, ...], float]:
    # coefficient of J in the contraction: sum over I subset K of
    # inner_I * outer_K * sign(I + J -> K), J = K \ I
    acc: dict[tuple[int, ...], float] = {}
    for idx_i, ci in inner:
        set_i = set(idx_i)
        for idx_k, ck in outer:
            if not set_i.issubset(idx_k):
                continue
            rest = tuple(j for j in idx_k if j not in set_i)
            sign = _merge_sign(idx_i, rest)
            acc[rest] = acc.get(rest, 0.0) + sign * ci * ck
    return acc


def interior_left(X: ExteriorElement, mu: ExteriorElement) -> ExteriorElement:
    """``X _| mu``: a covector of degree ``mu.degree - X.degree``."""
    _check_pairing(X, mu)
    if X.degree > mu.degree:
        raise ExteriorError(f"interior_left needs deg X <= deg mu, got {X.degree} > {mu.degree}")
    return ExteriorElement(mu.dimension, mu.degree - X.degree, COVECTOR, _contract(X, mu))


def interior_right(X: ExteriorElement, mu: ExteriorElement) -> ExteriorElement:
    """``X |_ mu``: a vector of degree ``X.degree - mu.degree``."""
    _check_pairing(X, mu)
    if X.degree < mu.degree:
        raise ExteriorError(f"interior_right needs deg X >= deg mu, got {X.degree} < {mu.degree}")
    return ExteriorElement(X.dimension, X.degree - mu.degree, VECTOR, _contract(mu, X))
