import dataclasses

import numpy as np
import pytest

from conftest import random_langevin
from oracles.closed_form import gamma2_rectangles, gamma2_rolls
from ferropattern import ConstantLaw, LangevinLaw, SurfaceField, StateTriple, make_lattice
from ferropattern.bifurcation import (BranchResult, BranchSolver, BranchType,
                                      DegenerateTransversality, WrongBranchType, C0_apply,
                                      C0_diag, L1_apply, Q0_apply, Q0_diag, branch_residual,
                                      classify_branch, kernel_vector, residual)
from ferropattern.linear_analysis import (apply_pencil, beta0_from_omega_tilde, critical_point,
                                          projection_P, threshold_beta0)

LAW = LangevinLaw(1.5, 2.0)
HEX_GAMMA1_BASELINE = 0.05652063552495379


@pytest.fixture(scope="module")
def setup():
    beta0 = 0.3 * threshold_beta0(LAW)
    return beta0, critical_point(beta0, LAW)


def small_state(lat, rng, amp):
    fs = []
    for _ in range(3):
        f = SurfaceField.random(lat, rng, band=2)
        fs.append(f * (amp / f.sup_norm(64)))
    return StateTriple(fs[0], fs[1].without_mean(), fs[2])


def test_zero_state_is_a_solution(setup):
    beta0, cp = setup
    lat = make_lattice("rectangles", cp.omega, 3)
    for gamma in (-1.0, 0.0, cp.gamma0, 5.0):
        assert residual(lat, LAW, beta0, gamma, StateTriple.zeros(lat)).sup_norm() < 1e-13


def test_kernel_direction_is_flat(setup):
    beta0, cp = setup
    lat = make_lattice("rolls", cp.omega, 4)
    v0 = kernel_vector(lat, cp)
    a = residual(lat, LAW, beta0, cp.gamma0, v0 * 1e-2, tol=1e-13).sup_norm() / 1e-2
    b = residual(lat, LAW, beta0, cp.gamma0, v0 * 5e-3, tol=1e-13).sup_norm() / 5e-3
    assert 1.9 < a / b < 2.1


def test_residual_rotation_equivariance(setup, rng):
    beta0, cp = setup
    lat = make_lattice("hexagons", cp.omega, 3)
    x = small_state(lat, rng, 0.02)
    a = residual(lat, LAW, beta0, cp.gamma0, x.rotated(), tol=1e-13)
    b = residual(lat, LAW, beta0, cp.gamma0, x, tol=1e-13).rotated()
    assert (a - b).sup_norm() < 1e-10


def test_L1():
    lat = make_lattice("rolls", 1.0, 3)
    eta = SurfaceField.cosine(lat, 1)
    out = L1_apply(StateTriple(eta, SurfaceField.zeros(lat), eta))
    assert np.allclose(out.stacked()[2], -eta.coeffs) and np.allclose(out.stacked()[:2], 0)


def test_multilinear_forms(setup, rng):
    beta0, cp = setup
    lat = make_lattice("rectangles", cp.omega, 3)
    a, b, c = (small_state(lat, rng, 1.0) for _ in range(3))
    zero = StateTriple.zeros(lat)
    args = (lat, LAW.constants(), beta0, cp)
    assert Q0_apply(*args, a, zero).sup_norm() < 1e-13
    assert (Q0_apply(*args, a, b) - Q0_apply(*args, b, a)).sup_norm() < 1e-12
    # a distinct but equal object goes through the polarisation path
    assert (Q0_apply(*args, a, a * 1.0) - Q0_diag(lat, LAW, beta0, a)).sup_norm() < 1e-11
    assert C0_apply(*args, a, a * 1.0, zero).sup_norm() < 1e-12
    ref = C0_apply(*args, a, b, c)
    for perm in ((b, c, a), (c, a, b), (b, a, c)):
        assert (C0_apply(*args, *perm) - ref).sup_norm() < 1e-11 * max(1, ref.sup_norm())


@pytest.mark.parametrize("pattern", ["rolls", "hexagons"])
def test_forms_against_residual_derivatives(pattern, setup):
    beta0, cp = setup
    lat = make_lattice(pattern, cp.omega, 4)
    v0 = kernel_vector(lat, cp)

    def R(e):
        return residual(lat, LAW, beta0, cp.gamma0, v0 * e, tol=1e-13)

    h = 2e-2
    rp, rm, rp2, rm2 = R(h), R(-h), R(2 * h), R(-2 * h)
    even1, even2 = (rp + rm) * (0.5 / h**2), (rp2 + rm2) * (0.5 / (2 * h) ** 2)
    odd1, odd2 = (rp - rm) * (0.5 / h**3), (rp2 - rm2) * (0.5 / (2 * h) ** 3)
    Q = Q0_diag(lat, LAW, beta0, v0)
    C = C0_diag(lat, LAW, beta0, v0)
    assert ((even1 * 4 - even2) * (1 / 3) - Q).sup_norm() < 1e-5 * Q.sup_norm()
    assert ((odd1 * 4 - odd2) * (1 / 3) - C).sup_norm() < 1e-4 * C.sup_norm()


def test_gamma1_vanishes_for_symmetric_lattices(rng):
    for _ in range(3):
        law = random_langevin(rng)
        beta0 = 0.3 * threshold_beta0(law)
        cp = critical_point(beta0, law)
        for pattern in ("rolls", "rectangles"):
            lat = make_lattice(pattern, cp.omega, 4)
            assert abs(BranchSolver(lat, law, beta0, cp).gamma1()) < 1e-10


def test_hexagon_gamma1_baseline():
    law = ConstantLaw(2.0)
    cp = critical_point(0.1, law)
    solver = BranchSolver(make_lattice("hexagons", cp.omega, 4), law, 0.1, cp)
    assert np.isclose(solver.gamma1(), HEX_GAMMA1_BASELINE, rtol=1e-9)
    with pytest.raises(WrongBranchType):
        solver.gamma2()


@pytest.mark.parametrize("pattern, support", [
    ("rolls", {(0, 0), (2, 0), (-2, 0)}),
    ("rectangles", {(0, 0), (2, 0), (-2, 0), (0, 2), (0, -2), (1, 1), (-1, -1), (1, -1), (-1, 1)}),
])
def test_quadratic_support(pattern, support, setup):
    beta0, cp = setup
    lat = make_lattice(pattern, cp.omega, 4)
    Q = BranchSolver(lat, LAW, beta0, cp).Q00().stacked()
    big = np.abs(Q).max(axis=0) > 1e-12
    m, n = lat.index_grids
    found = {(int(m[idx]), int(n[idx])) for idx in zip(*np.nonzero(big))}
    assert found <= support and (0, 0) in found


@pytest.mark.parametrize("pattern", ["rolls", "rectangles", "hexagons"])
def test_w1_equation(pattern, setup):
    beta0, cp = setup
    lat = make_lattice(pattern, cp.omega, 4)
    solver = BranchSolver(lat, LAW, beta0, cp)
    w1 = solver.solve_w1()
    rhs = -solver.Q00() - L1_apply(solver.v0) * solver.gamma1()
    rhs = rhs - projection_P(lat, cp, rhs)
    assert (apply_pencil(lat, cp, w1) - rhs).sup_norm() < 1e-8
    assert projection_P(lat, cp, w1).sup_norm() < 1e-10
    assert apply_pencil(lat, cp, solver.v0).sup_norm() < 1e-9


def test_degenerate_denominator(setup):
    beta0, cp = setup
    bad = dataclasses.replace(cp, v=np.array([0.0, cp.v[1], cp.v[2]]))
    with pytest.raises(DegenerateTransversality):
        BranchSolver(make_lattice("rolls", cp.omega, 3), LAW, beta0, bad).gamma1()


@pytest.mark.parametrize("mu, wt", [(2.0, 1.0), (4.5, 2.5)])
def test_gamma2_closed_form_samples(mu, wt):
    law = ConstantLaw(mu)
    beta0 = beta0_from_omega_tilde(wt, law)
    cp = critical_point(beta0, law)
    for pattern, oracle in (("rolls", gamma2_rolls), ("rectangles", gamma2_rectangles)):
        g2 = BranchSolver(make_lattice(pattern, cp.omega, 4), law, beta0, cp).gamma2()
        ref = oracle(mu, wt)
        assert abs(g2 - ref) < 1e-6 * abs(ref)


def test_classification_examples():
    assert classify_branch("hexagons", ConstantLaw(2.0), 0.1).classification is BranchType.TRANSCRITICAL
    assert classify_branch("rolls", ConstantLaw(5.0), deep=True).classification is BranchType.SUPERCRITICAL
    assert classify_branch("rectangles", ConstantLaw(1.2), deep=True).classification is BranchType.SUBCRITICAL


def test_depth_cap_is_recorded():
    law = ConstantLaw(3.0)
    res = classify_branch("rolls", law, 1e-4)
    assert res.diagnostics["depth_capped"] and res.beta0 == 1e-4
    assert res.diagnostics["beta0_effective"] > 1e-4


def test_branch_result_json_round_trip():
    res = classify_branch("rectangles", LAW, 0.3 * threshold_beta0(LAW), truncation=3)
    back = BranchResult.from_json(res.to_json())
    assert back.gamma1 == res.gamma1 and back.gamma2 == res.gamma2
    assert back.cp.omega == res.cp.omega and back.classification is res.classification
    assert np.array_equal(back.w1.stacked(), res.w1.stacked())


def test_branch_residual_is_third_order(setup):
    beta0, cp = setup
    res = classify_branch("rectangles", LAW, beta0)
    lat = make_lattice("rectangles", res.cp.omega, res.truncation)
    ratio = branch_residual(lat, LAW, res, 1e-2) / branch_residual(lat, LAW, res, 5e-3)
    assert 7.0 < ratio < 9.0
