import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freeshear import dispersion as D
from freeshear.errors import DegenerateFlux, InputError, Stagnation
from freeshear.profile import ShearProfile


@settings(max_examples=10, deadline=None)
@given(k=st.floats(0.05, 20.0), h=st.floats(0.3, 3.0), g=st.floats(1.0, 20.0))
def test_still_water_dispersion(k, h, g):
    p = ShearProfile.poly([0.0], h=h, g=g)
    c = D.solve_c_of_k(p, k).c
    assert c == pytest.approx(math.sqrt(g * math.tanh(k * h) / k), rel=1e-8)


def test_sine_dispersion(sine):
    ks = [0.25, 0.5, 1.0, 2.0, 4.0]
    pts = [D.solve_c_of_k(sine, k) for k in ks]
    cs = [p.c for p in pts]
    assert all(c > sine.u_max for c in cs)
    assert all(np.diff(cs) < 0)          # injective (decreasing) in k
    assert all(p.status == "ok" for p in pts)
    assert all(p.f_residual < 1e-10 for p in pts)
    r = D.bifurcation_system_residual(sine, pts[2])
    assert max(r.values()) < 1e-9


def test_f_changes_sign(sine):
    assert D.f_of_c(sine, 1.0, sine.u_max + 1e-4) < 0
    assert D.f_of_c(sine, 1.0, sine.u_max + 10.0) > 0
    assert all(D.condition_flags(sine).values())


def test_burns(still, sine):
    assert D.burns_speed(still) == pytest.approx(math.sqrt(9.81), rel=1e-12)
    cb = D.burns_speed(sine)
    assert abs(D.solve_c_of_k(sine, 1e-3).c - cb) < 1e-4 * cb


def test_bad_inputs(sine):
    with pytest.raises(InputError):
        D.solve_c_of_k(sine, 0.0)
    with pytest.raises(InputError):
        D.f_of_c(sine, 1.0, 0.5)


def test_trivial_flow_constant_vorticity():
    # gamma = g0 gives linear U with slope -g0 under the convention U' = -gamma(psi)
    spec = D.TrivialFlowSpec.from_function(lambda s: 0 * s + 0.7, -1.0, 2.0, 0.0)
    U = D.shear_from_gamma(spec)
    y = np.linspace(0, U.h, 50)
    assert np.allclose(U.Up(y), -0.7, atol=1e-9)
    assert U.Uh == pytest.approx(-math.sqrt(2.0), rel=1e-10)


def test_trivial_flow_errors(sine):
    with pytest.raises(DegenerateFlux):
        D.TrivialFlowSpec.from_function(lambda s: 0 * s + 1.0, -1.0, -3.0, 0.0)
    with pytest.raises(InputError):
        D.TrivialFlowSpec.from_function(lambda s: 0 * s, 1.0, 1.0, 0.0)
    with pytest.raises(Stagnation):
        D.gamma_from_shear(sine, 0.5)


@settings(max_examples=8, deadline=None)
@given(a=st.floats(0.2, 2.0), extra=st.floats(0.2, 3.0))
def test_round_trip_sine_family(a, extra):
    p = ShearProfile.sine(a, math.pi, 1.0)
    spec = D.gamma_from_shear(p, p.u_max + extra)
    V = D.shear_from_gamma(spec)
    y = np.linspace(0, 1, 401)
    assert abs(V.h - 1.0) < 1e-8
    assert np.max(np.abs(V.U(y * V.h) - p.U(y))) < 1e-8
