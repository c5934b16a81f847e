import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multisymp.grassmann import ProblemShape, lift_dense
from multisymp.lagrangian import make_density
from multisymp.legendre import (
    COND_LIMIT,
    DegenerateError,
    MomentumPoint,
    SubmanifoldChoice,
    ConvergenceError,
    ddw_transform,
    dedecker_transform,
    degeneracy_report,
    enlarged_pseudofiber,
    hamiltonian_eval,
    hamiltonian_gradient,
    pseudofiber_level,
    singular_locus,
    w_eval,
)

S22 = ProblemShape(2, 2)
Q4 = np.array([0.1, -0.2, 0.3, 0.4])


# Closed forms written out from the worked examples; P[i, mu] holds p^(mu+1)_(i+1).
def trivial_ref(e, P, r):
    return e - (P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0]) / r


def dirichlet_ref(e, P, r, B):
    s = r - B
    return e + (0.5 * np.sum(P**2) + s * (P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0])) / (1 - s * s)


def maxwell_ref(e, P, r):
    p11, p21, p12, p22 = P[0, 0], P[0, 1], P[1, 0], P[1, 1]
    return e + ((p21 + p12) ** 2 - 4 * p11 * p22) / (4 * r) - 0.25 * (p21 - p12) ** 2 / (2 + r)


def _point(e, P, r, q=Q4):
    return MomentumPoint.from_coordinates(S22, e, np.asarray(P, float), [r], q, SubmanifoldChoice.FULL)


def test_momentum_point_coordinates_round_trip():
    P = np.array([[1.0, 2.0], [3.0, 4.0]])
    mp = _point(0.5, P, 1.5)
    assert mp.e == 0.5
    np.testing.assert_array_equal(mp.P, P)
    np.testing.assert_array_equal(mp.higher, [1.5])
    # p^1_1 pairs with dy^1 ^ dx^2 = -(dx^2 ^ dy^1), so p_23 = -p^1_1
    assert mp.p[S22.position[(2, 3)]] == -1.0
    assert mp.p[S22.position[(1, 3)]] == 2.0


def test_momentum_point_rejects_wrong_length():
    with pytest.raises(ValueError):
        MomentumPoint(S22, Q4, np.zeros(5))


def test_frozen_trivial_value():
    # e - (p11 p22 - p21 p12)/r at e = 0.5, P = [[1, 2], [3, 4]], r = 2
    H, _ = hamiltonian_eval(make_density("trivial"), Q4, _point(0.5, [[1, 2], [3, 4]], 2.0))
    assert H == pytest.approx(0.5 - (4 - 6) / 2.0, abs=1e-12)


@pytest.mark.parametrize(
    "name,params,ref",
    [
        ("trivial", {}, lambda e, P, r: trivial_ref(e, P, r)),
        ("dirichlet", {"B": 0.0}, lambda e, P, r: dirichlet_ref(e, P, r, 0.0)),
        ("dirichlet", {"B": 0.5}, lambda e, P, r: dirichlet_ref(e, P, r, 0.5)),
        ("dirichlet", {"B": 2.0}, lambda e, P, r: dirichlet_ref(e, P, r, 2.0)),
        ("maxwell2d", {}, maxwell_ref),
    ],
)
def test_newton_hamiltonian_matches_closed_form(name, params, ref, rng):
    d = make_density(name, **params)
    singular = {"trivial": [0.0], "maxwell2d": [0.0, -2.0]}.get(name, [params.get("B", 0) + 1, params.get("B", 0) - 1])
    done = 0
    while done < 30:
        r = rng.uniform(-4, 4)
        if min(abs(r - s) for s in singular) < 0.1:
            continue
        e, P = rng.uniform(-2, 2), rng.normal(size=(2, 2))
        H, _ = hamiltonian_eval(d, Q4, _point(e, P, r))
        expected = ref(e, P, r)
        assert abs(H - expected) <= 1e-9 * max(1.0, abs(expected))
        done += 1


def test_mechanics_and_scalar_field_closed_forms(rng):
    mech = make_density("mechanics", omega=1.5)
    s = mech.shape
    for _ in range(10):
        q, e, P = rng.normal(size=2), rng.normal(), rng.normal(size=(1, 1))
        H, _ = hamiltonian_eval(mech, q, MomentumPoint.from_coordinates(s, e, P, None, q))
        assert H == pytest.approx(e + 0.5 * P[0, 0] ** 2 + 0.5 * 1.5**2 * q[1] ** 2, abs=1e-10)
    sf = make_density("scalar_field")
    for _ in range(10):
        q, e, P = rng.normal(size=3), rng.normal(), rng.normal(size=(1, 2))
        H, _ = hamiltonian_eval(sf, q, MomentumPoint.from_coordinates(sf.shape, e, P, None, q))
        assert H == pytest.approx(e + 0.5 * np.sum(P**2), abs=1e-10)


@pytest.mark.parametrize("name,params,r", [("dirichlet", {"B": 0.5}, 3.0), ("maxwell2d", {}, 1.5), ("mechanics", {}, None), ("scalar_field", {}, None)])
def test_legendre_round_trip(name, params, r, rng):
    d = make_density(name, **params)
    s = d.shape
    for _ in range(20):
        q = rng.uniform(-1, 1, s.N)
        v = rng.normal(size=(s.k, s.n))
        mp, report = dedecker_transform(d, q, v, None if r is None else [r])
        assert report.solvable
        _, v_back = hamiltonian_eval(d, q, mp)
        np.testing.assert_allclose(v_back, v, atol=1e-8)


def test_dedecker_momenta_make_v_critical(rng):
    d = make_density("dirichlet", B=0.3)
    v = rng.normal(size=(2, 2))
    mp, _ = dedecker_transform(d, Q4, v, [2.0])
    h = 1e-6
    for a in range(4):
        dv = np.zeros(4)
        dv[a] = h
        dv = dv.reshape(2, 2)
        fd = (w_eval(d, Q4, v + dv, mp) - w_eval(d, Q4, v - dv, mp)) / (2 * h)
        assert abs(fd) < 1e-7


def test_hamiltonian_momentum_gradient_is_lift(rng):
    d = make_density("maxwell2d")
    mp = _point(0.3, rng.normal(size=(2, 2)), 1.7)
    H, dq, dp, v = hamiltonian_gradient(d, Q4, mp)
    np.testing.assert_allclose(dp, lift_dense(v))
    h = 1e-6
    for a in range(S22.C):
        step = np.zeros(S22.C)
        step[a] = h
        hp, _ = hamiltonian_eval(d, Q4, mp.with_p(mp.p + step))
        hm, _ = hamiltonian_eval(d, Q4, mp.with_p(mp.p - step))
        assert (hp - hm) / (2 * h) == pytest.approx(dp[a], abs=1e-6)
    assert dp[S22.omega_position] == pytest.approx(1.0, abs=1e-10)


def test_position_gradient_is_minus_lagrangian_gradient():
    d = make_density("mechanics", omega=2.0)
    mp = MomentumPoint.from_coordinates(d.shape, 0.0, [[0.4]], None, [0.0, 0.5])
    _, dq, _, _ = hamiltonian_gradient(d, [0.0, 0.5], mp)
    np.testing.assert_allclose(dq, [0.0, 4.0 * 0.5])


@given(st.floats(-10, 10), st.integers(0, 2**32 - 1))
def test_level_shift_identity(lam, seed):
    rng = np.random.default_rng(seed)
    d = make_density("dirichlet", B=0.5)
    mp = _point(rng.normal(), rng.normal(size=(2, 2)), 3.0)
    h0, _ = hamiltonian_eval(d, Q4, mp)
    h1, _ = hamiltonian_eval(d, Q4, mp.shifted(lam))
    assert h1 == pytest.approx(h0 + lam, abs=1e-12 * max(1.0, abs(h0) + abs(lam)))


def test_degenerate_point_raises_with_locus():
    with pytest.raises(DegenerateError, match="r = 0"):
        hamiltonian_eval(make_density("trivial"), Q4, _point(0.0, np.eye(2), 0.0))
    with pytest.raises(DegenerateError, match="r = 0 or r = -2"):
        hamiltonian_eval(make_density("maxwell2d"), Q4, _point(0.0, np.eye(2), -2.0))


def test_newton_failure_reports_domain():
    d = make_density("dirichlet", B=0.0)
    with pytest.raises(ConvergenceError, match="outside correspondence domain"):
        hamiltonian_eval(d, Q4, _point(0.0, np.ones((2, 2)), 3.0), max_iter=0)


def test_degeneracy_detection():
    zero = np.zeros((2, 2))
    rep = degeneracy_report(make_density("maxwell2d"), Q4, zero, "dDW")
    assert rep.rank == 1 and not rep.solvable
    for r in (0.5, 1.0, 3.0, -1.0):
        assert degeneracy_report(make_density("maxwell2d"), Q4, zero, "full", [r]).solvable
    for r in (0.0, -2.0):
        assert not degeneracy_report(make_density("maxwell2d"), Q4, zero, "full", [r]).solvable
    for B in (0.0, 0.5, 2.0, -3.0):
        assert degeneracy_report(make_density("dirichlet", B=B), Q4, zero, "dDW").rank == 4
    for B in (1.0, -1.0):
        rep = degeneracy_report(make_density("dirichlet", B=B), Q4, zero, "dDW")
        assert rep.rank < 4 and (rep.condition > COND_LIMIT)


def test_ddw_transform_is_lagrangian_gradient(rng):
    d = make_density("dirichlet", B=0.5)
    v = rng.normal(size=(2, 2))
    mp = ddw_transform(d, Q4, v)
    assert mp.choice is SubmanifoldChoice.DDW
    np.testing.assert_allclose(mp.P, v + 0.5 * np.array([[v[1, 1], -v[1, 0]], [-v[0, 1], v[0, 0]]]))
    assert mp.higher.tolist() == [0.0] and mp.e == 0.0


def test_pseudofiber_spaces(rng):
    d = make_density("trivial")
    v = rng.normal(size=(2, 2))
    big = enlarged_pseudofiber(d, Q4, v, [1.5])
    assert big.dimension == 2
    lvl = pseudofiber_level(d, Q4, v, 0.7, [1.5])
    assert lvl.dimension == 1
    H, v_back = hamiltonian_eval(d, Q4, lvl.point)
    assert H == pytest.approx(0.7, abs=1e-10)
    np.testing.assert_allclose(v_back, v, atol=1e-8)
    # moving inside P^h keeps H and the velocity
    moved = lvl.point.with_p(lvl.point.p + 0.3 * lvl.direction_matrix()[0])
    H2, v2 = hamiltonian_eval(d, Q4, moved, v0=v)
    assert H2 == pytest.approx(0.7, abs=1e-9)
    np.testing.assert_allclose(v2, v, atol=1e-8)


def test_choice_parsing():
    assert SubmanifoldChoice.parse("ddw") is SubmanifoldChoice.DDW
    assert SubmanifoldChoice.parse("full") is SubmanifoldChoice.FULL
    with pytest.raises(ValueError):
        SubmanifoldChoice.parse("other")
    assert "B = 0.5" in singular_locus(make_density("dirichlet", B=0.5))
