"""Analytic test fields u(x) with exact first derivatives.

Each field maps node coordinates (*grid, n) to ``(u, du)`` with shapes
(*grid, k) and (*grid, k, n).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["SampleField", "FIELDS", "get_field", "field_names"]


@dataclass(frozen=True)
class SampleField:
    name: str
    n: int
    k: int
    fn: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    description: str = ""

    def __call__(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.fn(np.asarray(points, dtype=float))


def _scalar(fn, grad):
    def f(X):
        u = fn(X)
        return u[..., None], np.stack(grad(X), axis=-1)[..., None, :]

    return f


def _zero(n, k):
    def f(X):
        g = X.shape[:-1]
        return np.zeros(g + (k,)), np.zeros(g + (k, n))

    return f


def _smooth_pair(X):
    x1, x2 = X[..., 0], X[..., 1]
    u = np.stack([np.sin(x1) * np.cos(x2), x1 * x2 + 0.3 * x2**2], axis=-1)
    du = np.empty(X.shape[:-1] + (2, 2))
    du[..., 0, 0] = np.cos(x1) * np.cos(x2)
    du[..., 0, 1] = -np.sin(x1) * np.sin(x2)
    du[..., 1, 0] = x2
    du[..., 1, 1] = x1 + 0.6 * x2
    return u, du


def _linear_2x2(X):
    x1, x2 = X[..., 0], X[..., 1]
    A = np.array([[0.7, -0.2], [0.4, 1.1]])
    u = np.stack([A[0, 0] * x1 + A[0, 1] * x2, A[1, 0] * x1 + A[1, 1] * x2], axis=-1)
    du = np.broadcast_to(A, X.shape[:-1] + (2, 2)).copy()
    return u, du


def _gauge_2x2(X):
    # A = grad(phi) with phi = sin(x1) x2 has zero field strength
    x1, x2 = X[..., 0], X[..., 1]
    u = np.stack([np.cos(x1) * x2, np.sin(x1)], axis=-1)
    du = np.empty(X.shape[:-1] + (2, 2))
    du[..., 0, 0] = -np.sin(x1) * x2
    du[..., 0, 1] = np.cos(x1)
    du[..., 1, 0] = np.cos(x1)
    du[..., 1, 1] = 0.0
    return u, du


def _maxwell_bad(X):
    x1, x2 = X[..., 0], X[..., 1]
    u = np.stack([x2**2, np.zeros_like(x1)], axis=-1)
    du = np.zeros(X.shape[:-1] + (2, 2))
    du[..., 0, 1] = 2 * x2
    return u, du


def _harmonic_pair(X):
    x1, x2 = X[..., 0], X[..., 1]
    u = np.stack([x1 * x2, x1**2 - x2**2], axis=-1)
    du = np.empty(X.shape[:-1] + (2, 2))
    du[..., 0, 0] = x2
    du[..., 0, 1] = x1
    du[..., 1, 0] = 2 * x1
    du[..., 1, 1] = -2 * x2
    return u, du


def _nonharmonic_pair(X):
    x1, x2 = X[..., 0], X[..., 1]
    u = np.stack([x1**2, np.sin(x1) * np.sin(x2)], axis=-1)
    du = np.empty(X.shape[:-1] + (2, 2))
    du[..., 0, 0] = 2 * x1
    du[..., 0, 1] = 0.0
    du[..., 1, 0] = np.cos(x1) * np.sin(x2)
    du[..., 1, 1] = np.sin(x1) * np.cos(x2)
    return u, du


FIELDS: dict[str, SampleField] = {}


def _add(f: SampleField) -> None:
    FIELDS[f.name] = f


_add(SampleField("zero2", 2, 2, _zero(2, 2), "u = 0"))
_add(SampleField("smooth2", 2, 2, _smooth_pair, "u = (sin x1 cos x2, x1 x2 + 0.3 x2^2)"))
_add(SampleField("linear2", 2, 2, _linear_2x2, "u = A x"))
_add(SampleField("gauge2", 2, 2, _gauge_2x2, "u = grad(sin(x1) x2), zero field strength"))
_add(SampleField("maxwell_bad", 2, 2, _maxwell_bad, "u = (x2^2, 0)"))
_add(SampleField("harmonic2", 2, 2, _harmonic_pair, "u = (x1 x2, x1^2 - x2^2)"))
_add(SampleField("nonharmonic2", 2, 2, _nonharmonic_pair, "u = (x1^2, sin x1 sin x2)"))
_add(
    SampleField(
        "xy", 2, 1, _scalar(lambda X: X[..., 0] * X[..., 1], lambda X: (X[..., 1], X[..., 0])), "u = x1 x2"
    )
)
_add(
    SampleField(
        "saddle",
        2,
        1,
        _scalar(lambda X: X[..., 0] ** 2 - X[..., 1] ** 2, lambda X: (2 * X[..., 0], -2 * X[..., 1])),
        "u = x1^2 - x2^2",
    )
)
_add(
    SampleField(
        "sinexp",
        2,
        1,
        _scalar(
            lambda X: np.sin(X[..., 0]) * np.exp(X[..., 1]),
            lambda X: (np.cos(X[..., 0]) * np.exp(X[..., 1]), np.sin(X[..., 0]) * np.exp(X[..., 1])),
        ),
        "u = sin(x1) exp(x2)",
    )
)
_add(
    SampleField(
        "linear1", 2, 1, _scalar(lambda X: X[..., 0], lambda X: (np.ones_like(X[..., 0]), np.zeros_like(X[..., 0]))), "u = x1"
    )
)
_add(
    SampleField(
        "square", 2, 1, _scalar(lambda X: X[..., 0] ** 2, lambda X: (2 * X[..., 0], np.zeros_like(X[..., 0]))), "u = x1^2"
    )
)
_add(
    SampleField(
        "sinsin",
        2,
        1,
        _scalar(
            lambda X: np.sin(X[..., 0]) * np.sin(X[..., 1]),
            lambda X: (np.cos(X[..., 0]) * np.sin(X[..., 1]), np.sin(X[..., 0]) * np.cos(X[..., 1])),
        ),
        "u = sin x1 sin x2",
    )
)
_add(SampleField("cos", 1, 1, _scalar(lambda X: np.cos(X[..., 0]), lambda X: (-np.sin(X[..., 0]),)), "u = cos t"))
_add(SampleField("t2", 1, 1, _scalar(lambda X: X[..., 0] ** 2, lambda X: (2 * X[..., 0],)), "u = t^2"))
_add(SampleField("zero1", 1, 1, _zero(1, 1), "u = 0"))


def field_names() -> list[str]:
    return sorted(FIELDS)


def get_field(name: str) -> SampleField:
    try:
        return FIELDS[name]
    except KeyError:
        raise ValueError(f"unknown field {name!r}; known: {', '.join(field_names())}") from None
