"""Forward-mode dual numbers.

A :class:`DualScalar` carries a value and a vector of partial derivatives
with respect to a declared seed basis. Values and partials may themselves be
dual scalars, which is how second derivatives are obtained (dual over dual).
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "DualScalar",
    "seed",
    "seed_second",
    "value_of",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "gradient",
    "gradient_and_hessian",
]


class DualScalar:
    __slots__ = ("value", "partials")

    def __init__(self, value, partials):
        self.value = value
        self.partials = partials

    # ndarray operands return NotImplemented so numpy broadcasts elementwise
    def __add__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value + other.value, self.partials + other.partials)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return DualScalar(self.value + other, self.partials)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(self.value - other.value, self.partials - other.partials)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return DualScalar(self.value - other, self.partials)

    def __rsub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        return DualScalar(other - self.value, -self.partials)

    def __mul__(self, other):
        if isinstance(other, DualScalar):
            return DualScalar(
                self.value * other.value,
                self.partials * other.value + other.partials * self.value,
            )
        if isinstance(other, np.ndarray):
            return NotImplemented
        return DualScalar(self.value * other, self.partials * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, DualScalar):
            inv = 1.0 / other.value
            q = self.value * inv
            return DualScalar(q, (self.partials - other.partials * q) * inv)
        if isinstance(other, np.ndarray):
            return NotImplemented
        return DualScalar(self.value / other, self.partials * (1.0 / other))

    def __rtruediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        inv = 1.0 / self.value
        q = other * inv
        return DualScalar(q, self.partials * (-q * inv))

    def __neg__(self):
        return DualScalar(-self.value, -self.partials)

    def __pos__(self):
        return self

    def __pow__(self, k):
        if isinstance(k, DualScalar):
            return exp(k * log(self))
        if k == 0:
            return DualScalar(self.value * 0 + 1, self.partials * 0)
        if k == 1:
            return self
        if k == 2:
            return self * self
        base = self.value ** (k - 1)
        return DualScalar(base * self.value, self.partials * (k * base))

    def __abs__(self):
        return -self if value_of(self) < 0 else self

    # comparisons act on the innermost real value
    def __lt__(self, other):
        return value_of(self) < value_of(other)

    def __le__(self, other):
        return value_of(self) <= value_of(other)

    def __gt__(self, other):
        return value_of(self) > value_of(other)

    def __ge__(self, other):
        return value_of(self) >= value_of(other)

    def __float__(self):
        return float(value_of(self))

    def __repr__(self):
        return f"DualScalar({self.value!r}, {self.partials!r})"


def value_of(x) -> float:
    """Innermost real value of a (possibly nested) dual scalar."""
    while isinstance(x, DualScalar):
        x = x.value
    return x


def _unary(x, f: Callable, df: Callable):
    if isinstance(x, DualScalar):
        return DualScalar(_unary(x.value, f, df), x.partials * df(x.value))
    return f(x)


def sin(x):
    return _unary(x, math.sin, cos)


def cos(x):
    return _unary(x, math.cos, lambda v: -sin(v))


def exp(x):
    return _unary(x, math.exp, exp)


def log(x):
    return _unary(x, math.log, lambda v: 1.0 / v)


def sqrt(x):
    return _unary(x, math.sqrt, lambda v: 0.5 / sqrt(v))


def seed(values: Sequence[float]) -> list[DualScalar]:
    """First-order seeds: ``values[j]`` with unit partial ``e_j``."""
    m = len(values)
    eye = np.eye(m)
    return [DualScalar(float(v), eye[j].copy()) for j, v in enumerate(values)]


def seed_second(values: Sequence[float]) -> list[DualScalar]:
    """Dual-over-dual seeds for Hessians."""
    m = len(values)
    eye = np.eye(m)
    zeros = np.zeros(m)
    out = []
    for j, v in enumerate(values):
        inner = DualScalar(float(v), eye[j].copy())
        outer = np.empty(m, dtype=object)
        for k in range(m):
            outer[k] = DualScalar(1.0 if k == j else 0.0, zeros.copy())
        out.append(DualScalar(inner, outer))
    return out


def gradient(f: Callable[[list], object], x: Sequence[float]) -> tuple[float, np.ndarray]:
    """Value and gradient of a scalar function of ``len(x)`` scalars."""
    out = f(seed(x))
    if not isinstance(out, DualScalar):
        return float(out), np.zeros(len(x))
    return float(out.value), np.asarray(out.partials, dtype=float)


def gradient_and_hessian(
    f: Callable[[list], object], x: Sequence[float]
) -> tuple[float, np.ndarray, np.ndarray]:
    m = len(x)
    out = f(seed_second(x))
    if not isinstance(out, DualScalar):
        return float(out), np.zeros(m), np.zeros((m, m))
    inner = out.value
    if isinstance(inner, DualScalar):
        val, grad = float(inner.value), np.asarray(inner.partials, dtype=float)
    else:
        val, grad = float(inner), np.zeros(m)
    hess = np.zeros((m, m))
    for k in range(m):
        pk = out.partials[k]
        if isinstance(pk, DualScalar):
            hess[k] = np.asarray(pk.partials, dtype=float)
    return val, grad, hess
