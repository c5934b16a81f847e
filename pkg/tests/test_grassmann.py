from math import comb

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multisymp.dual import gradient
from multisymp.exterior import COVECTOR, VECTOR, ExteriorElement, ExteriorError, basis, pair, wedge
from multisymp.grassmann import (
    ProblemShape,
    annihilator,
    as_velocity,
    generator_full_2x2,
    generators_omega_2x2,
    is_decomposable_2,
    lift,
    lift_dense,
    lift_generic,
    lift_hessian_dense,
    null_space,
    plucker_residual,
    tangent_basis_full,
    tangent_basis_omega,
    tangent_dense_omega,
)

SHAPES = [(1, 1), (2, 1), (1, 2), (2, 2), (2, 3), (3, 2)]


def test_problem_shape_counts():
    s = ProblemShape(2, 2)
    assert (s.N, s.C, s.nk) == (4, 6, 4)
    assert s.momentum_indices[s.omega_position] == (1, 2)
    assert [s.momentum_indices[a] for a in s.higher_positions] == [(3, 4)]
    assert s.ddw_active.tolist() == [True, True, True, True, True, False]
    with pytest.raises(ValueError):
        ProblemShape(0, 1)


def test_single_index_signs_for_two_by_two():
    # p^mu_i sits at mu replaced by n + i, sorted
    s = ProblemShape(2, 2)
    assert s.single_index(1, 1) == ((2, 3), -1)
    assert s.single_index(2, 1) == ((1, 3), 1)
    assert s.single_index(1, 2) == ((2, 4), -1)
    assert s.single_index(2, 2) == ((1, 4), 1)


def test_lift_two_by_two_closed_form():
    v = np.array([[0.3, -1.2], [2.0, 0.5]])
    # order 12, 13, 14, 23, 24, 34
    expected = [1.0, v[0, 1], v[1, 1], -v[0, 0], -v[1, 0], v[0, 0] * v[1, 1] - v[0, 1] * v[1, 0]]
    np.testing.assert_allclose(lift_dense(v), expected, atol=1e-15)


def test_lift_mechanics_is_one_plus_velocity():
    np.testing.assert_allclose(lift_dense([[0.7]]), [1.0, 0.7])


def test_lift_normalised_against_base_volume(rng):
    for n, k in SHAPES:
        z = lift(rng.normal(size=(k, n)))
        assert pair(z, basis(n + k, tuple(range(1, n + 1)), COVECTOR)) == pytest.approx(1.0)


def test_lift_equals_wedge_of_graph_columns(rng):
    v = rng.normal(size=(3, 2))
    T = np.vstack([np.eye(2), v])
    cols = [ExteriorElement.from_dense(5, 1, VECTOR, T[:, mu]) for mu in range(2)]
    np.testing.assert_allclose(lift(v).to_dense(), wedge(*cols).to_dense(), atol=1e-14)


def test_velocity_validation():
    with pytest.raises(ValueError):
        as_velocity([[1.0, np.nan]])
    with pytest.raises(ValueError):
        as_velocity(np.zeros((2, 2)), ProblemShape(2, 1))


@pytest.mark.parametrize("n,k", SHAPES)
def test_tangent_rows_are_lift_derivatives(n, k, rng):
    s = ProblemShape(n, k)
    v = rng.normal(size=(k, n))
    rows = tangent_dense_omega(v)
    for a in range(s.nk):
        comp = [
            gradient(lambda e: lift_generic(np.reshape(e, (k, n)).tolist(), s)[c], v.ravel())[1][a]
            for c in range(s.C)
        ]
        np.testing.assert_allclose(rows[a], comp, atol=1e-12)


@pytest.mark.parametrize("n,k", SHAPES)
def test_lift_hessian_matches_differenced_tangents(n, k, rng):
    s = ProblemShape(n, k)
    v = rng.normal(size=(k, n))
    H = lift_hessian_dense(v)
    h = 1e-6
    for b in range(s.nk):
        dv = np.zeros(s.nk)
        dv[b] = h
        fd = (tangent_dense_omega(v + dv.reshape(k, n)) - tangent_dense_omega(v - dv.reshape(k, n))) / (2 * h)
        np.testing.assert_allclose(H[:, b, :], fd, atol=1e-7)


@pytest.mark.parametrize("n,k", SHAPES)
def test_annihilator_dimensions(n, k, rng):
    C = comb(n + k, n)
    v = rng.normal(size=(k, n))
    assert len(annihilator(tangent_basis_omega(v))) == C - n * k
    assert len(annihilator(tangent_basis_full(v))) == C - n * k - 1


@pytest.mark.parametrize("n,k", SHAPES)
def test_annihilator_kills_tangents(n, k, rng):
    v = rng.normal(size=(k, n))
    tb = tangent_basis_full(v)
    for a in annihilator(tb):
        assert a.variance == COVECTOR
        for t in tb:
            assert abs(pair(t, a)) < 1e-12


def test_omega_lies_in_enlarged_annihilator(rng):
    v = rng.normal(size=(2, 2))
    Q = np.array([a.to_dense() for a in annihilator(tangent_basis_omega(v))])
    e = np.zeros(6)
    e[0] = 1.0
    np.testing.assert_allclose(Q.T @ (Q @ e), e, atol=1e-12)


def _projection_residual(Q, g):
    return float(np.max(np.abs(g - Q.T @ (Q @ g))) / np.max(np.abs(g)))


@given(st.integers(0, 2**32 - 1))
def test_two_by_two_generators_span_the_annihilators(seed):
    v = np.random.default_rng(seed).normal(size=(2, 2))
    Qf = np.array([a.to_dense() for a in annihilator(tangent_basis_full(v))])
    assert _projection_residual(Qf, generator_full_2x2(v).to_dense()) <= 1e-10
    Qo = np.array([a.to_dense() for a in annihilator(tangent_basis_omega(v))])
    for g in generators_omega_2x2(v):
        assert _projection_residual(Qo, g.to_dense()) <= 1e-10


def test_generator_pairs_to_zero_with_lift(rng):
    v = rng.normal(size=(2, 2))
    assert abs(pair(lift(v), generator_full_2x2(v))) < 1e-14


def test_null_space_of_rank_deficient_rows():
    rows = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0]])
    ns = null_space(rows)
    assert ns.shape == (2, 3)
    np.testing.assert_allclose(rows @ ns.T, 0.0, atol=1e-14)
    np.testing.assert_allclose(ns @ ns.T, np.eye(2), atol=1e-14)
    assert null_space(np.zeros((1, 3))).shape == (3, 3)


def test_annihilator_rejects_bad_input():
    with pytest.raises(ExteriorError):
        annihilator([])
    with pytest.raises(ExteriorError):
        annihilator([basis(4, (1, 2), COVECTOR)])
    with pytest.raises(ExteriorError):
        annihilator([basis(4, (1, 2)), basis(4, (1,))])


def test_sum_of_two_planes_is_not_decomposable():
    X = basis(4, (1, 2)) + basis(4, (3, 4))
    ok, residual = is_decomposable_2(X)
    assert not ok
    assert residual == 1.0


@given(st.integers(0, 2**32 - 1), st.integers(4, 6))
def test_wedge_of_two_vectors_is_decomposable(seed, dim):
    rng = np.random.default_rng(seed)
    a, b = (ExteriorElement.from_dense(dim, 1, VECTOR, rng.normal(size=dim)) for _ in range(2))
    ok, residual = is_decomposable_2(wedge(a, b))
    assert ok and residual < 1e-10


def test_plucker_needs_degree_two():
    with pytest.raises(ExteriorError):
        plucker_residual(basis(4, (1, 2, 3)))
