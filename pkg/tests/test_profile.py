import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freeshear.errors import NonSimpleRoot, ProfileError, UnboundedK
from freeshear.profile import (KFunction, ShearProfile, classify, find_inflections, level_set,
                               load_profile, parse_builtin)


def test_sine_basics(sine):
    assert sine.u_min == pytest.approx(-1.0, abs=1e-12)
    assert sine.u_max == pytest.approx(1.0, abs=1e-12)
    assert sine.y_at_max == pytest.approx(1.0, abs=1e-9)
    assert sine.Uh == pytest.approx(1.0, abs=1e-15)
    assert sine.Uph == pytest.approx(0.0, abs=1e-14)
    y = np.linspace(0, 1, 7)
    assert np.allclose(sine.Upp(y), -math.pi ** 2 * np.sin(math.pi * (y - 0.5)))


def test_sine_K_is_constant(sine):
    K = KFunction(sine, 0.0)
    y = np.linspace(0.0, 1.0, 101)
    assert np.allclose(K(y), math.pi ** 2, rtol=1e-10)
    assert K(0.5) == pytest.approx(math.pi ** 2, rel=1e-12)
    assert isinstance(K(0.3), float)


def test_inflections_sine(sine):
    infl = find_inflections(sine)
    assert infl.points == pytest.approx((0.5,), abs=1e-13)
    assert infl.values == pytest.approx((0.0,), abs=1e-13)


def test_linear_profile_has_no_inflection():
    infl = find_inflections(ShearProfile.poly([0.0, 1.0]))
    assert infl.degenerate_linear and not infl.points
    cls = classify(ShearProfile.poly([0.0, 1.0]))
    assert not cls.has_inflection


def test_classes(sine, quartic):
    c = classify(sine)
    assert c.is_Kplus and c.is_F and c.is_Fplus and c.is_monotone
    q = classify(quartic)
    assert q.is_Fplus and not q.is_Kplus
    assert sorted(q.K_sign_per_value.values()) == [-1, 1]


def test_full_period_sine_is_Kplus():
    # U'' vanishes at the ends too, so K is bounded on the whole level set
    p = ShearProfile.sine(1.0, 2 * math.pi, 1.0)
    assert classify(p).is_Kplus


def test_unbounded_K():
    # U = y^3 - y/4 has its inflection at 0 with U''(±1/2) != 0 on the same level
    p = ShearProfile.poly([0.0, -0.25, 0.0, 1.0], h=1.0)
    with pytest.raises(UnboundedK):
        KFunction(p, 0.0)


def test_nonsimple_root():
    p = ShearProfile.poly([-0.125, 0.75, -1.5, 1.0])
    with pytest.raises(NonSimpleRoot):
        KFunction(p, 0.0)


def test_level_set(sine):
    assert level_set(sine, 0.0) == pytest.approx([0.5], abs=1e-14)
    assert level_set(sine, 2.0) == []


def test_tabulated_matches_function(sine):
    y = np.linspace(0, 1, 401)
    t = ShearProfile.tabulated(y, sine.U(y), spline_bc="not-a-knot")
    yy = np.linspace(0, 1, 1000)
    assert np.max(np.abs(t.U(yy) - sine.U(yy))) < 1e-9
    assert find_inflections(t).points == pytest.approx((0.5,), abs=1e-6)


@pytest.mark.parametrize("d, msg", [
    ({"kind": "sine", "a": 1, "b": 1}, "missing"),
    ({"kind": "poly", "coeffs": "x", "h": 1}, "list"),
    ({"kind": "tabulated", "y": [0, 1], "u": [0, 1]}, "4"),
    ({"kind": "cosh"}, "unknown"),
    ({"kind": "poly", "coeffs": [0, 1], "h": -1}, "depth"),
    ({"kind": "poly", "coeffs": [0, 1], "h": 1, "g": 0}, "gravity"),
])
def test_from_dict_errors(d, msg):
    with pytest.raises(ProfileError, match=msg):
        ShearProfile.from_dict(d)


def test_load_profile_line_diagnostics(tmp_path):
    f = tmp_path / "p.json"
    f.write_text('{"kind": "poly",\n "coeffs": [0, 1\n}')
    with pytest.raises(ProfileError, match="line 3"):
        load_profile(f)


def test_load_profile_g_override(tmp_path):
    f = tmp_path / "p.json"
    f.write_text(json.dumps({"kind": "sine", "a": 1, "b": math.pi, "h": 1, "g": 2.0}))
    assert load_profile(f).g == 2.0
    assert load_profile(f, g=5.0).g == 5.0


def test_parse_builtin():
    p = parse_builtin("sine:1,1pi,1")
    assert p.b == pytest.approx(math.pi)
    with pytest.raises(ProfileError):
        parse_builtin("sine:1,2")
    with pytest.raises(ProfileError):
        parse_builtin("cosh:1,2,3")


@settings(max_examples=25, deadline=None)
@given(c0=st.floats(-5, 5), s=st.floats(0.2, 5))
def test_shift_and_scale(c0, s):
    p = ShearProfile.sine(1.0, math.pi, 1.0)
    q = p.shifted(c0)
    assert q.u_min == pytest.approx(p.u_min + c0, abs=1e-10)
    r = p.scaled(s)
    assert r.u_max == pytest.approx(s * p.u_max, rel=1e-10)
    assert find_inflections(q).values == pytest.approx((c0,), abs=1e-9)
