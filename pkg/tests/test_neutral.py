import math

import pytest
from numpy.polynomial import Polynomial
from scipy.integrate import quad

from freeshear import neutral, rayleigh, sturm
from freeshear.errors import NonSimpleRoot, NotFplus
from freeshear.profile import ShearProfile


def lin(y):
    return y - 0.5


def test_pv_odd_symmetry():
    r = neutral.pv_integral(lambda y: 1.0, lin, [(0.5, 1.0)], 0.0, 1.0)
    assert abs(r.value) < 1e-12


def test_pv_linear_numerator():
    r = neutral.pv_integral(lambda y: y, lin, [(0.5, 1.0)], 0.0, 1.0)
    assert r.value == pytest.approx(1.0, abs=1e-12)
    assert r.rel_diff < 1e-6


def test_pv_no_roots():
    f = lambda y: math.exp(y)
    den = lambda y: y + 2.0
    r = neutral.pv_integral(f, den, [], 0.0, 1.0)
    assert r.value == pytest.approx(quad(lambda y: f(y) / den(y), 0, 1, epsabs=1e-14)[0], abs=1e-10)


def test_pv_against_cauchy_weight():
    # curved denominator: U - U_s = sin(pi (y - 0.37)) near y = 0.37
    den = lambda y: math.sin(math.pi * (y - 0.37))
    f = lambda y: math.cos(y) + y * y
    r = neutral.pv_integral(f, den, [(0.37, math.pi)], 0.0, 1.0)
    g = lambda y: f(y) * (y - 0.37) / den(y)
    ref, _ = quad(g, 0.0, 1.0, weight="cauchy", wvar=0.37, epsabs=1e-14, epsrel=1e-13)
    assert r.value == pytest.approx(ref, rel=1e-8)


def test_pv_non_simple():
    with pytest.raises(NonSimpleRoot):
        neutral.pv_integral(lambda y: 1.0, lambda y: (y - 0.5) ** 2, [(0.5, 0.0)], 0.0, 1.0)


def test_reduce_sequence():
    seq = [(1.0, 1), (2.0, 1), (3.0, -1), (4.0, -1), (5.0, 1)]
    assert neutral.reduce_sequence(seq) == [(0.0, -1), (2.0, 1), (3.0, -1), (5.0, 1)]
    assert neutral.reduce_sequence([(1.0, -1), (2.0, 1)]) == [(1.0, -1), (2.0, 1)]
    assert neutral.reduce_sequence([]) == []


@pytest.fixture(scope="module")
def sine_neutral(sine):
    return neutral.neutral_modes(sine)


def test_sine_single_neutral_mode(sine, sine_neutral):
    assert len(sine_neutral) == 1
    m = sine_neutral[0]
    assert m.c_s == pytest.approx(0.0, abs=1e-12)
    assert m.alpha_s == pytest.approx(sturm.alpha_triple(sine).alpha_max, abs=1e-10)
    assert m.positive and m.variant.tag == "free_surface"
    assert m.phi_s.values[-1].real == pytest.approx(1.0)
    assert m.phi_s.deriv_values[-1].real == pytest.approx(9.81, rel=1e-6)


def test_sine_rate(sine, sine_neutral):
    r = neutral.bifurcation_rate(sine, sine_neutral[0])
    assert r.D < 0 and r.dcdeps.imag < 0
    assert r.A == pytest.approx(2 * 9.81, rel=1e-12)
    assert not r.degenerate


def test_dirichlet_branch_A_zero():
    # U(h) equals the inflection value: rigid-lid type top condition with A = 0
    p = ShearProfile.sine(1.0, 2 * math.pi, 1.0)
    modes = neutral.neutral_modes(p)
    assert len(modes) == 1 and modes[0].variant.tag == "dirichlet"
    r = neutral.bifurcation_rate(p, modes[0])
    assert r.A == 0.0
    assert r.dcdeps.imag < 0
    fd = neutral.fd_rate_check(p, modes[0], r)
    assert max(d["rel_err"] for d in fd) < 0.05
    assert all(d["c"].imag > 0 for d in fd)


def test_no_inflection():
    p = ShearProfile.poly([0.0, 1.0])
    assert neutral.neutral_modes(p) == []
    assert neutral.unstable_intervals(p).intervals == []


def test_sine_interval(sine):
    ui = neutral.unstable_intervals(sine)
    assert len(ui.intervals) == 1
    lo, hi = ui.intervals[0]
    assert lo == 0.0 and hi == pytest.approx(10.300762265039877, abs=1e-9)


def test_two_inflection_values(quartic):
    ui = neutral.unstable_intervals(quartic)
    assert len(ui.intervals) == 1
    lo, hi = ui.intervals[0]
    lams = [l for e in ui.neutral_catalog for l in e.eigenvalues]
    for endpoint in (lo, hi):
        assert min(abs(endpoint - math.sqrt(-l)) for l in lams) < 1e-10
    # spot winding counts: inside the interval and in both gaps
    assert rayleigh.winding_count(quartic, 0.5 * (lo + hi)) == 1
    assert rayleigh.winding_count(quartic, 0.5 * lo) == 0
    assert rayleigh.winding_count(quartic, 1.1 * hi) == 0


def test_not_fplus():
    # U'' = (y - 1/2)^3: K vanishes at the inflection point
    y = Polynomial([-0.5, 1.0])
    U = Polynomial([0.0, 1.0]) + (y ** 5) / 20.0
    p = ShearProfile.poly(U.coef)
    with pytest.raises(NotFplus):
        neutral.unstable_intervals(p)
