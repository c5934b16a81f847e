"""Covariant Hamiltonian numerics for first-order field theories.

Derives Hamiltonians from Lagrangian densities through the Legendre
correspondence, checks Hamilton n-curve equations on discrete fields and
computes pseudofiber geometry. The submodules are the public surface; the
names below are the ones most scripts need.
"""

from ._kernels import BACKEND
from .exterior import ExteriorElement, ExteriorError, interior_left, pair, wedge
from .grassmann import ProblemShape, annihilator, is_decomposable_2, lift
from .hamilton import (
    DiscreteCurve,
    Grid,
    LegendreHamiltonian,
    closed_form_hamiltonian,
    hamilton_residual,
    legendre_lift,
)
from .lagrangian import LagrangianDensity, make_density
from .legendre import (
    ConvergenceError,
    DegenerateError,
    MomentumPoint,
    SubmanifoldChoice,
    dedecker_transform,
    hamiltonian_eval,
)
from .observables import bracket, coordinate_observable, is_regular

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ExteriorElement",
    "ExteriorError",
    "interior_left",
    "pair",
    "wedge",
    "ProblemShape",
    "annihilator",
    "is_decomposable_2",
    "lift",
    "DiscreteCurve",
    "Grid",
    "LegendreHamiltonian",
    "closed_form_hamiltonian",
    "hamilton_residual",
    "legendre_lift",
    "LagrangianDensity",
    "make_density",
    "ConvergenceError",
    "DegenerateError",
    "MomentumPoint",
    "SubmanifoldChoice",
    "dedecker_transform",
    "hamiltonian_eval",
    "bracket",
    "coordinate_observable",
    "is_regular",
]
