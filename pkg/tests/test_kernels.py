import itertools
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multisymp import _kernels
from multisymp._kernels import _pykernels
from multisymp.exterior import VECTOR, ExteriorElement, interior_left, wedge_all
from multisymp.grassmann import ProblemShape
from multisymp.hamilton import omega_form
from multisymp.legendre import SubmanifoldChoice

try:
    from multisymp._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None

needs_compiled = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")

SHAPES = [(1, 1), (1, 2), (2, 1), (2, 2), (2, 3), (3, 2)]


def _exterior_contract(t, shape, choice):
    D = shape.N + shape.C
    X = wedge_all([ExteriorElement.from_dense(D, 1, VECTOR, row) for row in t])
    return interior_left(X, omega_form(shape, choice)).to_dense()


def _active(shape, choice):
    return np.ones(shape.C, dtype=bool) if choice == "full" else shape.ddw_active


@pytest.mark.parametrize("n,k", SHAPES)
@pytest.mark.parametrize("choice", ["full", "dDW"])
def test_numpy_contraction_matches_exterior_algebra(n, k, choice, rng):
    s = ProblemShape(n, k)
    t = rng.normal(size=(4, n, s.N + s.C))
    got = _pykernels.contract_omega(t, s.index_table, _active(s, choice), s.N)
    for m in range(4):
        np.testing.assert_allclose(got[m], _exterior_contract(t[m], s, SubmanifoldChoice.parse(choice)), atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("n,k", SHAPES)
def test_compiled_contraction_matches_numpy(n, k, rng):
    s = ProblemShape(n, k)
    t = rng.normal(size=(50, n, s.N + s.C))
    for act in (np.ones(s.C, dtype=bool), s.ddw_active):
        np.testing.assert_allclose(
            _ckernels.contract_omega(t, s.index_table, act, s.N),
            _pykernels.contract_omega(t, s.index_table, act, s.N),
            atol=1e-12,
        )


@needs_compiled
@given(st.sampled_from(SHAPES), st.integers(0, 2**32 - 1))
def test_compiled_minors_match_numpy(shape, seed):
    s = ProblemShape(*shape)
    tq = np.random.default_rng(seed).normal(size=(7, s.N, s.n))
    np.testing.assert_allclose(
        _ckernels.plucker_minors(tq, s.index_table), _pykernels.plucker_minors(tq, s.index_table), atol=1e-12
    )


def test_minors_are_determinants(rng):
    s = ProblemShape(2, 3)
    tq = rng.normal(size=(3, s.N, s.n))
    got = _kernels.plucker_minors(tq, s.index_table)
    for m, a in itertools.product(range(3), range(s.C)):
        rows = [i - 1 for i in s.momentum_indices[a]]
        assert got[m, a] == pytest.approx(np.linalg.det(tq[m][rows]), abs=1e-12)


def test_backend_selection_honours_environment():
    code = "import multisymp._kernels as k; print(k.BACKEND)"
    out = subprocess.run(
        [sys.executable, "-c", code], env={"MULTISYMP_PURE_PYTHON": "1", "PATH": ""}, capture_output=True, text=True
    )
    assert out.stdout.strip() == "python"
    assert _kernels.BACKEND in ("python", "cython")
