"""Lagrangian densities l(x, y, v) with forward-mode derivatives.

An evaluator receives numpy arrays ``x`` (n,), ``y`` (k,) and ``v`` (k, n).
When derivatives are requested the arrays have ``object`` dtype and hold
:class:`~multisymp.dual.DualScalar` entries, so evaluators must stick to
arithmetic and the elementary functions of :mod:`multisymp.dual`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import dual
from .grassmann import ProblemShape, as_velocity

__all__ = [
    "LagrangianDensity",
    "DensityError",
    "eval_density",
    "grad_v",
    "grad_q",
    "grad_z",
    "hessian_vv",
    "register_density",
    "make_density",
    "density_names",
]

Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], object]


class DensityError(ValueError):
    """Bad density name, parameters or evaluation domain."""


@dataclass(frozen=True)
class LagrangianDensity:
    shape: ProblemShape
    evaluator: Evaluator
    name: str
    params: Mapping[str, float] = field(default_factory=dict)

    def __call__(self, x, y, v):
        return eval_density(self, x, y, v)


def _coerce(density: LagrangianDensity, x, y, v):
    s = density.shape
    x = np.zeros(s.n) if x is None else np.asarray(x, dtype=float).reshape(-1)
    y = np.zeros(s.k) if y is None else np.asarray(y, dtype=float).reshape(-1)
    if x.shape != (s.n,) or y.shape != (s.k,):
        raise DensityError(f"expected x in R^{s.n} and y in R^{s.k}, got {x.shape} and {y.shape}")
    v = as_velocity(v, s).entries
    return x, y, v


def _as_float(out) -> float:
    val = float(dual.value_of(out))
    if not np.isfinite(val):
        raise DensityError("density evaluated to a non-finite value")
    return val


def eval_density(density: LagrangianDensity, x, y, v) -> float:
    x, y, v = _coerce(density, x, y, v)
    return _as_float(density.evaluator(x, y, v))


def _pack(values: list, n: int, k: int):
    x = np.empty(n, dtype=object)
    y = np.empty(k, dtype=object)
    v = np.empty((k, n), dtype=object)
    x[:] = values[:n]
    y[:] = values[n : n + k]
    v.ravel()[:] = values[n + k :]
    return x, y, v


def _full_fn(density: LagrangianDensity):
    s = density.shape

    def f(values):
        return density.evaluator(*_pack(list(values), s.n, s.k))

    return f


def _v_fn(density: LagrangianDensity, x, y):
    s = density.shape

    def f(values):
        v = np.empty((s.k, s.n), dtype=object)
        v.ravel()[:] = list(values)
        return density.evaluator(x.astype(object), y.astype(object), v)

    return f


def grad_v(density: LagrangianDensity, x, y, v) -> np.ndarray:
    """dl/dv^i_mu as a (k, n) array."""
    x, y, v = _coerce(density, x, y, v)
    _, g = dual.gradient(_v_fn(density, x, y), v.ravel())
    return g.reshape(v.shape)


def grad_q(density: LagrangianDensity, x, y, v) -> tuple[np.ndarray, np.ndarray]:
    """(dl/dx, dl/dy) at fixed v."""
    x, y, v = _coerce(density, x, y, v)
    s = density.shape
    _, g = dual.gradient(_full_fn(density), np.concatenate([x, y, v.ravel()]))
    return g[: s.n], g[s.n : s.N]


def grad_z(density: LagrangianDensity, x, y, v) -> np.ndarray:
    """dL/dz against ``tangent_basis_omega(v)``; in the graph chart this is grad_v flattened."""
    return grad_v(density, x, y, v).ravel()


def hessian_vv(density: LagrangianDensity, x, y, v) -> np.ndarray:
    """Second derivatives in v, (nk, nk) with rows ordered like ``v.ravel()``."""
    x, y, v = _coerce(density, x, y, v)
    _, _, h = dual.gradient_and_hessian(_v_fn(density, x, y), v.ravel())
    return h


# -- built-in densities ------------------------------------------------------

_REGISTRY: dict[str, Callable[..., LagrangianDensity]] = {}


def register_density(name: str, factory: Callable[..., LagrangianDensity]) -> None:
    """Register ``factory(**params) -> LagrangianDensity`` under ``name``."""
    _REGISTRY[name] = factory


def density_names() -> list[str]:
    return sorted(_REGISTRY)


def make_density(name: str, **params) -> LagrangianDensity:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise DensityError(f"unknown density {name!r}; known: {', '.join(density_names())}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise DensityError(f"bad parameters for {name!r}: {exc}") from None


def _sumsq(a: np.ndarray):
    total = 0.0
    for t in a.ravel():
        total = total + t * t
    return total


def _trivial(n: int = 2, k: int = 2) -> LagrangianDensity:
    return LagrangianDensity(ProblemShape(int(n), int(k)), lambda x, y, v: 0.0, "trivial", {})


def _dirichlet(B: float = 0.0) -> LagrangianDensity:
    B = float(B)

    def l(x, y, v):
        return 0.5 * _sumsq(v) + B * (v[0, 0] * v[1, 1] - v[0, 1] * v[1, 0])

    return LagrangianDensity(ProblemShape(2, 2), l, "dirichlet", {"B": B})


def _maxwell2d() -> LagrangianDensity:
    def l(x, y, v):
        f = v[0, 1] - v[1, 0]
        return -0.5 * f * f

    return LagrangianDensity(ProblemShape(2, 2), l, "maxwell2d", {})


def _mechanics(omega: float = 1.0, k: int = 1) -> LagrangianDensity:
    """Point particle in the potential V(y) = omega^2 |y|^2 / 2."""
    omega = float(omega)
    w2 = omega * omega

    def l(x, y, v):
        return 0.5 * _sumsq(v) - 0.5 * w2 * _sumsq(y)

    return LagrangianDensity(ProblemShape(1, int(k)), l, "mechanics", {"omega": omega})


def _scalar_field(n: int = 2) -> LagrangianDensity:
    def l(x, y, v):
        return 0.5 * _sumsq(v)

    return LagrangianDensity(ProblemShape(int(n), 1), l, "scalar_field", {})


register_density("trivial", _trivial)
register_density("dirichlet", _dirichlet)
register_density("maxwell2d", _maxwell2d)
register_density("mechanics", _mechanics)
register_density("scalar_field", _scalar_field)
