import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from ferropattern import (CallableLaw, ConstantLaw, LangevinLaw, LawConstants, LawError,
                          TabulatedLaw, constants_at_one, law_from_spec, nu_apply, potential_M)
from ferropattern.magnetization import richardson_derivatives

EY = np.array([0.0, 1.0, 0.0])


def test_constant_law_constants():
    c = constants_at_one(ConstantLaw(2.0))
    assert c.as_tuple()[:4] == (2.0, 0.0, 0.0, 0.0)
    assert c.S1 == 1.0 and c.is_constant


def test_S1_quarter_rule():
    assert np.isclose(LawConstants(2.0, 6.0, 0, 0).S1, 0.5)


def test_ellipticity_violation():
    with pytest.raises(LawError):
        LawConstants(1.0, -1.0, 0.0, 0.0)


def test_langevin_derivatives_match_finite_differences():
    law = LangevinLaw(1.0, 3.0)
    h = 1e-3
    f = law.mu
    d1 = (-f(1 + 2 * h) + 8 * f(1 + h) - 8 * f(1 - h) + f(1 - 2 * h)) / (12 * h)
    d2 = (-f(1 + 2 * h) + 16 * f(1 + h) - 30 * f(1) + 16 * f(1 - h) - f(1 - 2 * h)) / (12 * h * h)
    c = law.constants()
    assert abs(c.dmu1 - d1) < 1e-7
    assert abs(c.ddmu1 - d2) < 1e-6
    d3 = richardson_derivatives(f, 1.0)[2]
    assert abs(c.dddmu1 - d3) < 1e-6 * max(1, abs(d3))


def test_langevin_closed_form_and_small_s_limit():
    M, g = 1.3, 2.2
    law = LangevinLaw(M, g)
    s = np.array([1e-3, 0.2, 1.0, 3.0, 40.0])
    x = g * s
    ref = 1 + M / s * (1 / np.tanh(x) - 1 / x)
    assert np.allclose(law.mu(s[1:]), ref[1:], rtol=1e-13)
    assert np.isclose(law.mu(1e-9), 1 + M * g / 3, rtol=1e-12)
    assert np.all(law.mu(np.linspace(0.01, 10, 50)) >= 1)


@pytest.mark.parametrize("s", [0.3, 1.0, 2.5])
def test_langevin_potential_against_quadrature(s):
    law = LangevinLaw(1.0, 3.0)
    ref, _ = integrate.quad(lambda t: t * law.mu(t), 0, s, epsabs=0, epsrel=1e-13)
    assert abs(potential_M(law, s) - ref) < 1e-10


def test_potential_examples():
    assert potential_M(ConstantLaw(2.0), 3.0) == 9.0
    assert potential_M(LangevinLaw(1.0, 1.0), 0.0) == 0.0
    with pytest.raises(LawError):
        potential_M(ConstantLaw(2.0), -1.0)


def test_generic_law_uses_richardson():
    law = CallableLaw(lambda s: 1.5 + 0.2 * np.sin(s))
    c = law.constants()
    assert np.allclose(c.as_tuple()[:4], [1.5 + 0.2 * np.sin(1), 0.2 * np.cos(1),
                                          -0.2 * np.sin(1), -0.2 * np.cos(1)], atol=1e-8)


def test_tabulated_law_interpolates(tmp_path):
    s = np.linspace(0.2, 3, 30)
    law = TabulatedLaw(s, 1 + 0.5 / (1 + s))
    assert np.isclose(law.mu(1.0), 1.25, atol=1e-4)
    path = tmp_path / "law.csv"
    np.savetxt(path, np.column_stack([s, 1 + 0.5 / (1 + s)]), delimiter=",")
    assert np.isclose(law_from_spec(f"custom-table:path={path}").mu(1.0), 1.25, atol=1e-4)


def test_law_from_spec_variants():
    assert law_from_spec("constant:mu=2").mu(1.0) == 2.0
    lang = law_from_spec("langevin:M=1,gamma=3")
    assert np.isclose(lang.mu(1.0), LangevinLaw(1, 3).mu(1.0))
    with pytest.raises(ValueError):
        law_from_spec("quadratic:a=1")


def test_nu_examples():
    c = LangevinLaw(1.0, 3.0).constants()
    assert nu_apply(c, 0) == c.mu1
    assert np.isclose(nu_apply(c, 1, np.array([0.0, 0.7, 0.0])), c.dmu1 * 0.7)
    assert nu_apply(c, 1, np.array([0.7, 0.0, 0.0])) == 0.0
    with pytest.raises(NotImplementedError):
        nu_apply(c, 4, EY, EY, EY, EY)
    with pytest.raises(ValueError):
        nu_apply(c, 2, EY)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_nu_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    c = LangevinLaw(rng.uniform(0.5, 3), rng.uniform(0.5, 4)).constants()
    a, b, d = rng.normal(size=(3, 3))
    assert np.isclose(nu_apply(c, 2, a, b), nu_apply(c, 2, b, a), rtol=1e-12, atol=1e-14)
    vals = [nu_apply(c, 3, *p) for p in [(a, b, d), (b, d, a), (d, a, b), (b, a, d)]]
    assert np.allclose(vals, vals[0], rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("j", [1, 2, 3])
def test_nu_taylor_order(j, rng):
    law = LangevinLaw(1.4, 2.1)
    c = law.constants()
    T = rng.normal(size=3)

    def err(eps):
        approx = sum(nu_apply(c, i, *([eps * T] * i)) for i in range(j + 1))
        return abs(law.mu(np.linalg.norm(eps * T + EY)) - approx)

    ratio = err(2e-2) / err(1e-2)
    assert abs(np.log2(ratio) - (j + 1)) < 0.2
