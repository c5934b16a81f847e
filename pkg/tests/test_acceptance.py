"""Acceptance gate: one test (or group) per numbered criterion.

Closed forms below are transcribed from the worked examples and are kept
independent of ``multisymp.oracles``. Each criterion prints one PASS/FAIL
line in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from multisymp.exterior import VECTOR, ExteriorElement
from multisymp.fields import get_field
from multisymp.grassmann import (
    ProblemShape,
    annihilator,
    generator_full_2x2,
    is_decomposable_2,
    lift_dense,
    tangent_basis_full,
    tangent_basis_omega,
)
from multisymp.hamilton import (
    ClosedFormHamiltonian,
    Grid,
    HamiltonError,
    LegendreHamiltonian,
    closed_form_hamiltonian,
    critical_verdict,
    deform_along_pseudofiber,
    euler_lagrange_residual,
    trivial_curve_family,
    hamilton_residual,
    hamilton_solution_space,
    legendre_lift,
    order_estimate,
)
from multisymp.lagrangian import make_density
from multisymp.legendre import (
    COND_LIMIT,
    MomentumPoint,
    SubmanifoldChoice,
    dedecker_transform,
    degeneracy_report,
    hamiltonian_eval,
    hamiltonian_gradient,
)
from multisymp.observables import coordinate_observable, generalized_pseudofiber_directions, is_regular

pytestmark = pytest.mark.acceptance

S22 = ProblemShape(2, 2)
FULL = SubmanifoldChoice.FULL


def _det(P):
    return P[0, 0] * P[1, 1] - P[0, 1] * P[1, 0]


def h_trivial(e, P, r):
    return e - _det(P) / r


def h_dirichlet(B):
    def h(e, P, r):
        s = r - B
        return e + (0.5 * np.sum(P * P) + s * _det(P)) / (1.0 - s * s)

    return h


def h_maxwell(e, P, r):
    # P[i, mu] = p^(mu+1)_(i+1): p^1_2 = P[1, 0], p^2_1 = P[0, 1]
    p12, p21 = P[1, 0], P[0, 1]
    return e + ((p12 + p21) ** 2 - 4 * P[0, 0] * P[1, 1]) / (4 * r) - 0.25 * (p12 - p21) ** 2 / (2 + r)


TWO_BY_TWO = [
    ("trivial", {}, h_trivial, [0.0]),
    ("dirichlet", {"B": 0.0}, h_dirichlet(0.0), [1.0, -1.0]),
    ("dirichlet", {"B": 0.5}, h_dirichlet(0.5), [1.5, -0.5]),
    ("dirichlet", {"B": 2.0}, h_dirichlet(2.0), [3.0, 1.0]),
    ("maxwell2d", {}, h_maxwell, [0.0, -2.0]),
]


def _safe_r(rng, singular, margin=0.1):
    while True:
        r = rng.uniform(-4.0, 4.0)
        if min(abs(r - s) for s in singular) >= margin:
            return r


def _label(name, params):
    return name + "".join(f"(B={v:g})" for v in params.values())


# -- 1 -------------------------------------------------------------------------------


@pytest.mark.criterion(1)
def test_hamiltonian_oracle_equivalence(record_property):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = {}
    for name, params, ref, singular in TWO_BY_TWO:
        d = make_density(name, **params)
        err = 0.0
        for _ in range(200):
            q = rng.uniform(-1, 1, 4)
            e, P, r = rng.uniform(-2, 2), rng.normal(size=(2, 2)), _safe_r(rng, singular)
            H, _ = hamiltonian_eval(d, q, MomentumPoint.from_coordinates(S22, e, P, [r], q, FULL))
            expected = ref(e, P, r)
            err = max(err, abs(H - expected) / abs(expected))
        worst[_label(name, params)] = err
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    record_property("detail", f"max rel error {top:.2e}, {elapsed:.2f} s")
    assert top <= 1e-9, worst
    assert elapsed <= 10.0


# -- 2 -------------------------------------------------------------------------------


ROUND_TRIP = [(n, p, s) for n, p, _, s in TWO_BY_TWO] + [("mechanics", {"omega": 1.3}, None), ("scalar_field", {}, None)]


@pytest.mark.criterion(2)
def test_legendre_round_trip(record_property):
    rng = np.random.default_rng(2)
    worst = 0.0
    for name, params, singular in ROUND_TRIP:
        d = make_density(name, **params)
        s = d.shape
        for _ in range(200):
            q = rng.uniform(-1, 1, s.N)
            v = rng.normal(size=(s.k, s.n))
            higher = None if singular is None else [_safe_r(rng, singular, 0.5)]
            mp, report = dedecker_transform(d, q, v, higher)
            assert report.solvable
            _, v_back = hamiltonian_eval(d, q, mp)
            worst = max(worst, float(np.max(np.abs(v_back - v))))
    record_property("detail", f"max |v - v'| {worst:.2e}")
    assert worst <= 1e-8


# -- 3 -------------------------------------------------------------------------------


@pytest.mark.criterion(3)
def test_momentum_derivative_is_velocity(record_property):
    rng = np.random.default_rng(3)
    worst_p, worst_e = 0.0, 0.0
    for name, params, _, singular in TWO_BY_TWO:
        d = make_density(name, **params)
        for _ in range(10):
            q = rng.uniform(-1, 1, 4)
            mp = MomentumPoint.from_coordinates(S22, rng.normal(), rng.normal(size=(2, 2)), [_safe_r(rng, singular, 0.5)], q, FULL)
            H, _, dp, v = hamiltonian_gradient(d, q, mp)
            z = lift_dense(v)
            h = 1e-6
            for a in range(S22.C):
                step = np.zeros(S22.C)
                step[a] = h
                hp, _ = hamiltonian_eval(d, q, mp.with_p(mp.p + step), v0=v)
                hm, _ = hamiltonian_eval(d, q, mp.with_p(mp.p - step), v0=v)
                worst_p = max(worst_p, abs((hp - hm) / (2 * h) - z[a]))
            he = 1e-3
            hp, _ = hamiltonian_eval(d, q, mp.shifted(he), v0=v)
            hm, _ = hamiltonian_eval(d, q, mp.shifted(-he), v0=v)
            worst_e = max(worst_e, abs((hp - hm) / (2 * he) - 1.0), abs(dp[S22.omega_position] - 1.0))
    record_property("detail", f"dH/dp vs z {worst_p:.2e}, dH/de - 1 {worst_e:.2e}")
    assert worst_p <= 1e-6
    assert worst_e <= 1e-10


# -- 4 -------------------------------------------------------------------------------


@pytest.mark.criterion(4)
def test_level_shift_identity(record_property):
    rng = np.random.default_rng(4)
    worst = 0.0
    for name, params, _, singular in TWO_BY_TWO:
        d = make_density(name, **params)
        for _ in range(40):
            q = rng.uniform(-1, 1, 4)
            mp = MomentumPoint.from_coordinates(S22, rng.normal(), rng.normal(size=(2, 2)), [_safe_r(rng, singular)], q, FULL)
            lam = rng.uniform(-10, 10)
            h0, _ = hamiltonian_eval(d, q, mp)
            h1, _ = hamiltonian_eval(d, q, mp.shifted(lam))
            worst = max(worst, abs(h1 - (h0 + lam)))
    record_property("detail", f"max deviation {worst:.2e}")
    assert worst <= 1e-12


# -- 5 -------------------------------------------------------------------------------


@pytest.mark.criterion(5)
@pytest.mark.parametrize("n,k", [(1, 1), (2, 1), (1, 2), (2, 2), (2, 3), (3, 2)])
def test_pseudofiber_dimensions(n, k, record_property):
    rng = np.random.default_rng(5)
    C = math.comb(n + k, n)
    for _ in range(5):
        v = rng.normal(size=(k, n))
        big, small = len(annihilator(tangent_basis_omega(v))), len(annihilator(tangent_basis_full(v)))
        assert (big, small) == (C - n * k, C - n * k - 1)


@pytest.mark.criterion(5)
def test_two_by_two_generators(record_property):
    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(50):
        v = rng.normal(size=(2, 2))
        g = generator_full_2x2(v).to_dense()
        Q = np.array([a.to_dense() for a in annihilator(tangent_basis_full(v))])
        worst = max(worst, float(np.max(np.abs(g - Q.T @ (Q @ g))) / np.max(np.abs(g))))
        Qo = np.array([a.to_dense() for a in annihilator(tangent_basis_omega(v))])
        omega = np.eye(6)[0]
        worst = max(worst, float(np.max(np.abs(omega - Qo.T @ (Qo @ omega)))))
    record_property("detail", f"generator projection residual {worst:.2e}")
    assert worst <= 1e-10


# -- 6 -------------------------------------------------------------------------------


def _square(m):
    return Grid((0.0, 0.0), (1.0, 1.0), (m, m))


def _family_curve(g, h=0.2):
    u, du = get_field("smooth2")(g.points())
    X = g.points()
    r = 1.5 + 0.5 * np.sin(X[..., 0] + X[..., 1])
    return trivial_curve_family(g, u, du, r, h)


def _oscillator(m):
    d = make_density("mechanics")
    g = Grid((0.0,), (2 * math.pi,), (m,))
    u, du = get_field("cos")(g.points())
    return legendre_lift(d, u, g, "dDW", du=du), closed_form_hamiltonian(d, "dDW")


@pytest.mark.criterion(6)
def test_residual_convergence(record_property):
    start = time.perf_counter()
    H4 = closed_form_hamiltonian(make_density("trivial"))
    fam = [hamilton_residual(_family_curve(_square(m)), H4).max_norm for m in (17, 33, 65)]
    HL = LegendreHamiltonian(make_density("trivial"))
    fam_newton = [hamilton_residual(_family_curve(_square(m)), HL).max_norm for m in (17, 33)]
    osc = []
    for m in (101, 201, 401):
        curve, Hm = _oscillator(m)
        osc.append(hamilton_residual(curve, Hm).max_norm)
    orders = [order_estimate(a, b) for a, b in zip(fam, fam[1:])]
    orders += [order_estimate(*fam_newton)]
    orders += [order_estimate(a, b) for a, b in zip(osc, osc[1:])]

    bad = []
    # off-level momenta on a family curve
    for m in (17, 33):
        c = _family_curve(_square(m))
        X = c.grid.points()
        p = c.p.copy()
        p[..., S22.omega_position] += 0.3 * np.sin(3 * X[..., 0])
        bad.append(hamilton_residual(c.with_momenta(p, None), H4).max_norm)
    sf = make_density("scalar_field")
    sq = []
    for m in (17, 33):
        g = _square(m)
        u, du = get_field("square")(g.points())
        sq.append(hamilton_residual(legendre_lift(sf, u, g, "dDW", du=du), closed_form_hamiltonian(sf, "dDW")).max_norm)
    mech = make_density("mechanics")
    t2 = []
    for m in (101, 201):
        g = Grid((0.0,), (2 * math.pi,), (m,))
        u, du = get_field("t2")(g.points())
        t2.append(hamilton_residual(legendre_lift(mech, u, g, "dDW", du=du), closed_form_hamiltonian(mech, "dDW")).max_norm)
    bad_orders = [order_estimate(*bad), order_estimate(*sq), order_estimate(*t2)]
    bad_floor = min(bad[1], sq[1], t2[1])
    elapsed = time.perf_counter() - start
    record_property(
        "detail",
        f"solution orders min {min(orders):.3f}; non-solution orders max |.| {max(map(abs, bad_orders)):.3f}, "
        f"residual floor {bad_floor:.2e}; {elapsed:.1f} s",
    )
    assert min(orders) >= 1.8
    assert max(abs(o) for o in bad_orders) <= 0.2
    assert bad_floor >= 1e-2
    assert elapsed <= 30.0


# -- 7 -------------------------------------------------------------------------------


VERDICT_SUITE = [
    ("scalar_field", {}, "saddle", None, "dDW", True),
    ("scalar_field", {}, "xy", None, "dDW", True),
    ("scalar_field", {}, "square", None, "dDW", False),
    ("scalar_field", {}, "sinsin", None, "dDW", False),
    ("dirichlet", {"B": 0.5}, "harmonic2", 3.0, "full", True),
    ("dirichlet", {"B": 0.5}, "nonharmonic2", 3.0, "full", False),
    ("maxwell2d", {}, "gauge2", 1.5, "full", True),
    ("maxwell2d", {}, "maxwell_bad", 1.5, "full", False),
    ("trivial", {}, "nonharmonic2", 1.5, "full", True),
    ("mechanics", {}, "cos", None, "dDW", True),
    ("mechanics", {}, "t2", None, "dDW", False),
]


@pytest.mark.criterion(7)
def test_hamilton_and_euler_lagrange_verdicts_agree(record_property):
    agree = 0
    for name, params, field, r, choice, expected in VERDICT_SUITE:
        d = make_density(name, **params)
        H = LegendreHamiltonian(d, choice)
        ham, el = [], []
        for m in ((101, 201) if d.shape.n == 1 else (17, 33)):
            g = Grid((0.0,) * d.shape.n, ((2 * math.pi,) if d.shape.n == 1 else (1.0, 1.0)), (m,) * d.shape.n)
            u, du = get_field(field)(g.points())
            ham.append(hamilton_residual(legendre_lift(d, u, g, choice, r, 0.0, du=du), H).max_norm)
            el.append(float(np.max(np.abs(euler_lagrange_residual(d, u, g, du)[g.interior_mask()]))))
        h_ok, el_ok = critical_verdict(*ham), critical_verdict(*el)
        assert h_ok == el_ok == expected, (name, field, ham, el)
        agree += 1
    record_property("detail", f"{agree}/{len(VERDICT_SUITE)} pairs agree")


# -- 8 -------------------------------------------------------------------------------


@pytest.mark.criterion(8)
def test_deformation_invariance(record_property):
    trivial = make_density("trivial")
    H = closed_form_hamiltonian(trivial)
    worst = 0.0
    for m in (17, 33):
        g = _square(m)
        curve = _family_curve(g)
        X = g.points()
        du = curve.velocities()
        for a in (
            0.3 * np.sin(X[..., 0]) * np.cos(X[..., 1]),
            0.5 * X[..., 0] * X[..., 1] - 0.2,
            np.exp(-X[..., 1]) * 0.4,
        ):
            pi = np.empty(g.shape + (6,))
            for node in np.ndindex(*g.shape):
                pi[node] = a[node] * generator_full_2x2(du[node]).to_dense()
            moved = deform_along_pseudofiber(curve, trivial, pi, level=curve.level)
            assert np.array_equal(moved.u, curve.u)
            assert np.array_equal(moved.velocities(), curve.velocities())
            ratio = hamilton_residual(moved, H).max_norm / hamilton_residual(curve, H).max_norm
            worst = max(worst, ratio)
    record_property("detail", f"max residual ratio {worst:.3f}")
    assert worst <= 2.0


# -- 9 -------------------------------------------------------------------------------


@pytest.mark.criterion(9)
def test_nonexistence_obstruction(record_property):
    H = ClosedFormHamiltonian(S22, lambda q, p: p[0] + p[5], FULL, "p12 + p34")
    _, _, dp = H.gradient(np.zeros(4), np.zeros(6))
    X = ExteriorElement.from_dense(4, 2, VECTOR, dp)
    ok, residual = is_decomposable_2(X)
    record_property("detail", f"Plucker residual {residual!r}")
    assert not ok
    assert residual == 1.0
    with pytest.raises(HamiltonError):
        hamilton_solution_space(H, np.zeros(4), np.zeros(6))


# -- 10 ------------------------------------------------------------------------------


BUILTINS = [
    ("trivial", {}, 1.5),
    ("dirichlet", {"B": 0.5}, 3.0),
    ("maxwell2d", {}, 1.5),
    ("mechanics", {}, None),
    ("scalar_field", {}, None),
]


def _samples(d, r, rng, count=50):
    """Legendre images of random velocities; sample 0 is the rest point v = 0."""
    s = d.shape
    out = []
    for j in range(count):
        q = rng.uniform(-1, 1, s.N)
        v = np.zeros((s.k, s.n)) if j == 0 else rng.normal(size=(s.k, s.n))
        mp, _ = dedecker_transform(d, q, v, None if r is None else [r])
        out.append((q, mp.p))
    return out


@pytest.mark.criterion(10)
@pytest.mark.parametrize("name,params,r", BUILTINS)
def test_base_coordinates_regular(name, params, r, record_property):
    d = make_density(name, **params)
    H = LegendreHamiltonian(d)
    pts = _samples(d, r, np.random.default_rng(10))
    for mu in range(1, d.shape.n + 1):
        assert is_regular(H, coordinate_observable(d.shape, [mu]), pts).verdict
    if d.shape.n >= 2:
        assert is_regular(H, coordinate_observable(d.shape, [1, 2]), pts).verdict


@pytest.mark.criterion(10)
@pytest.mark.parametrize("name,params,r", BUILTINS)
def test_fiber_coordinate_fails_factorization(name, params, r, record_property):
    d = make_density(name, **params)
    H = LegendreHamiltonian(d)
    pts = _samples(d, r, np.random.default_rng(10))
    rep = is_regular(H, coordinate_observable(d.shape, [d.shape.n + 1]), pts)
    record_property("detail", f"y1 on {name}: {rep.failing_condition} at sample {rep.failing_sample}")
    assert not rep.verdict
    assert rep.failing_condition == "factorization"


# -- 11 ------------------------------------------------------------------------------


@pytest.mark.criterion(11)
def test_generalized_directions_equal_annihilator(record_property):
    rng = np.random.default_rng(11)
    worst_angle, worst_dq = 0.0, 0.0
    for name, params, _, singular in TWO_BY_TWO:
        d = make_density(name, **params)
        H = LegendreHamiltonian(d)
        for _ in range(20):
            q = rng.uniform(-1, 1, 4)
            v = rng.normal(size=(2, 2))
            mp, _ = dedecker_transform(d, q, v, [_safe_r(rng, singular, 0.5)])
            dirs = generalized_pseudofiber_directions(H, q, mp.p, rng)
            Q = np.array([a.to_dense() for a in annihilator(tangent_basis_full(v))])
            assert dirs.dimension == Q.shape[0]
            worst_angle = max(worst_angle, float(np.max(subspace_angles(dirs.momentum_part().T, Q.T))))
            worst_dq = max(worst_dq, float(np.max(np.abs(dirs.basis[:, :4]))))
    record_property("detail", f"max principal angle {worst_angle:.2e}, max |dq| {worst_dq:.2e}")
    assert worst_angle <= 1e-8
    assert worst_dq <= 1e-8


# -- 12 ------------------------------------------------------------------------------


@pytest.mark.criterion(12)
def test_degeneracy_detection(record_property):
    rng = np.random.default_rng(12)
    q = np.zeros(4)
    maxwell = make_density("maxwell2d")
    for _ in range(5):
        v = rng.normal(size=(2, 2))
        assert degeneracy_report(maxwell, q, v, "dDW").rank == 1
        for r in (-3.0, -1.0, 0.5, 2.0, rng.uniform(0.2, 4)):
            assert degeneracy_report(maxwell, q, v, "full", [r]).solvable
        for r in (0.0, -2.0):
            assert not degeneracy_report(maxwell, q, v, "full", [r]).solvable
    conds = {}
    for B in (-2.0, -0.5, 0.0, 0.5, 0.99, 2.0):
        rep = degeneracy_report(make_density("dirichlet", B=B), q, rng.normal(size=(2, 2)), "dDW")
        assert rep.solvable and rep.rank == 4
    for B in (1.0, -1.0):
        rep = degeneracy_report(make_density("dirichlet", B=B), q, rng.normal(size=(2, 2)), "dDW")
        assert rep.rank < 4 and rep.condition > COND_LIMIT and not rep.solvable
        conds[B] = rep.condition
    record_property("detail", "maxwell dDW rank 1; dirichlet B=+-1 rank-deficient")
