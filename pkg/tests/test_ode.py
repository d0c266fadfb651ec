import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freeshear import ode
from freeshear.errors import CriticalLayer
from freeshear.profile import ShearProfile


def test_still_water_closed_form(still):
    # U = 0: phi'' = alpha^2 phi, phi(0)=0, phi'(0)=1 -> sinh(alpha y)/alpha
    a = 2.5
    g = ode.integrate_rayleigh(still, a, 0.7 + 0.1j)
    y = g.nodes
    assert np.max(np.abs(g.values - np.sinh(a * y) / a)) < 1e-9
    assert np.max(np.abs(g.deriv_values - np.cosh(a * y))) < 1e-9
    assert g.accuracy < 1e-10


def test_top_start(still):
    a = 1.5
    g = ode.integrate_rayleigh(still, a, 2.0, init=(1.0, 0.0), at="top")
    assert np.max(np.abs(g.values - np.cosh(a * (g.nodes - 1.0)))) < 1e-9


def test_critical_layer_real_c(sine):
    with pytest.raises(CriticalLayer):
        ode.integrate_rayleigh(sine, 1.0, 0.2, branch="real")


def test_bad_arguments(sine):
    with pytest.raises(ValueError):
        ode.integrate_rayleigh(sine, 1.0, 0.2j, N=10)
    with pytest.raises(ValueError):
        ode.integrate_rayleigh(sine, 1.0, 0.2j, at="middle")


def test_fourth_order(sine):
    c = 0.3 + 0.2j
    v = [ode.integrate_rayleigh(sine, 4.0, c, N=n, certify=False).values[-1] for n in (201, 401, 801)]
    order = math.log2(abs(v[0] - v[1]) / abs(v[1] - v[2]))
    assert 3.7 < order < 4.3


def test_transfer_product_matches_march(sine):
    cs = np.array([0.2 + 0.3j, -0.4 + 0.05j, 1.2 + 0.1j])
    a = ode.top_pair_at_bottom(sine, 3.0, cs, deriv=True)          # product path (M <= 8)
    many = np.concatenate([cs, 0.5 + 0.5j + 0.01 * np.arange(9)])
    b = ode.top_pair_at_bottom(sine, 3.0, many, deriv=True)        # stepping path
    for k in ("phi1", "phi2", "chi1", "chi2"):
        assert np.allclose(a[k], b[k][:3], rtol=1e-12, atol=1e-14)


def test_pair_consistency(sine):
    # phi1(0), phi2(0) from the pair agree with the batch routine
    c = 0.1 + 0.2j
    fp = ode.fundamental_pair(sine, 2.0, c)
    r = ode.top_pair_at_bottom(sine, 2.0, [c])
    assert fp.phi1.values[0] == pytest.approx(r["phi1"][0], rel=1e-12)
    assert fp.phi2.values[0] == pytest.approx(r["phi2"][0], rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 20.0), cr=st.floats(-1.5, 1.5), ci=st.floats(0.01, 1.0))
def test_wronskian_relative(a, cr, ci):
    # relative to |phi1 phi2'| + |phi2 phi1'| the identity holds at all alpha;
    # the absolute form is limited by cancellation once alpha h is large
    p = ShearProfile.sine()
    fp = ode.fundamental_pair(p, a, complex(cr, ci))
    f1, f2 = fp.phi1, fp.phi2
    w = f1.values * f2.deriv_values - f2.values * f1.deriv_values
    mag = np.abs(f1.values * f2.deriv_values) + np.abs(f2.values * f1.deriv_values)
    assert np.max(np.abs(w - 1.0) / mag) < 1e-12
    if a < 7.0:
        assert fp.wronskian_residual < 1e-9


def test_deformed_path_avoids_critical_layer(sine):
    path = ode.make_path(sine, 2001, sign=1)
    assert path.sign == 1
    # continuation from above: Im U <= 0 along the path
    assert np.max(np.imag(sine.U(path.y))) <= 1e-12
    assert path.y[0] == 0 and path.y[-1] == 1.0


def test_graded_nodes():
    n = ode.graded_nodes(1.0, 101, clusters=[(0.3, 1e-6)])
    assert n[0] == 0.0 and n[-1] == 1.0
    assert np.all(np.diff(n) > 0)
    assert np.max(np.diff(n)) <= 1.0 / 100 + 1e-15
    assert np.min(np.abs(n - 0.3)) < 1e-5
