import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from freeshear import sturm
from freeshear.errors import InputError
from freeshear.profile import KFunction, ShearProfile
from freeshear.sturm import DIRICHLET, FREE_SURFACE, NEUMANN_TOP, BCVariant, SturmProblem

def const(k):
    return lambda y: np.full_like(np.asarray(y, float), k)

@pytest.mark.parametrize("K", [0.0, 4.0, 9.0])
def test_dirichlet_constant_K(K):
    lam = SturmProblem(const(K), 1.0, BCVariant(DIRICHLET)).eigenvalue(0)
    assert lam == pytest.approx(math.pi ** 2 - K, abs=1e-9)

@pytest.mark.parametrize("K", [0.0, 1.0, 5.0])
def test_neumann_constant_K(K):
    lam = SturmProblem(const(K), 1.0, BCVariant(NEUMANN_TOP)).eigenvalue(0)
    assert lam == pytest.approx((math.pi / 2) ** 2 - K, abs=1e-9)

@settings(max_examples=15, deadline=None)
@given(beta=st.floats(1.5, 40.0), K=st.floats(0.0, 20.0))
def test_robin_constant_K(beta, K):
    # phi = sinh(kappa y) with kappa coth(kappa) = beta; lambda = -kappa^2 - K
    kap = brentq(lambda x: x / math.tanh(x) - beta, 1e-9, 200.0, xtol=1e-15)
    lam = SturmProblem(const(K), 1.0, BCVariant(FREE_SURFACE, beta)).eigenvalue(0)
    assert lam == pytest.approx(-kap * kap - K, abs=1e-9 * max(1.0, abs(lam)))

def test_higher_eigenvalues():
    prob = SturmProblem(const(50.0), 1.0, BCVariant(DIRICHLET))
    lams = sturm.negative_eigenvalues(ShearProfile.poly([0.0, 1.0]), const(50.0), BCVariant(DIRICHLET))
    exact = [(n * math.pi) ** 2 - 50.0 for n in (1, 2)]
    assert lams == pytest.approx(exact, abs=1e-8)
    assert prob.negative_count() == 2
    assert prob.result(1).node_count == 1

def test_sine_alpha_triple(sine):
    tri = sturm.alpha_triple(sine)
    kap = brentq(lambda x: x / math.tanh(x) - 9.81, 1e-6, 100, xtol=1e-15)
    assert tri.alpha_max == pytest.approx(math.sqrt(kap * kap + math.pi ** 2), abs=1e-9)
    assert tri.alpha_d == 0.0
    assert 0 < tri.alpha_n < tri.alpha_max
    assert all(tri.checks.values())
    fs = tri.results["free_surface"]
    assert fs.node_count == 0
    assert fs.rayleigh_quotient_residual < 1e-8
    assert sturm.variational_check(fs) >= fs.lambda0 - 1e-9

def test_grid_independence(sine):
    K = KFunction(sine, 0.0)
    v = BCVariant.free_surface(sine, 0.0)
    a = SturmProblem(K, 1.0, v, 2001).eigenvalue(0)
    b = SturmProblem(K, 1.0, v, 4001).eigenvalue(0)
    assert abs(a - b) < 1e-9

def test_dirichlet_switch():
    p = ShearProfile.sine(1.0, 2 * math.pi, 1.0)
    v = BCVariant.free_surface(p, 0.0)
    assert v.tag == DIRICHLET and v.note

def test_sampled_K():
    lam = SturmProblem(np.full(201, 4.0), 1.0, BCVariant(DIRICHLET)).eigenvalue(0)
    assert lam == pytest.approx(math.pi ** 2 - 4.0, abs=1e-8)

def test_errors(sine):
    with pytest.raises(InputError):
        BCVariant("robin")
    with pytest.raises(InputError):
        BCVariant(FREE_SURFACE, None)
    with pytest.raises(InputError):
        SturmProblem(const(1.0), 1.0, BCVariant(DIRICHLET), N=100)
    with pytest.raises(InputError):
        sturm.alpha_triple(ShearProfile.poly([0.0, 1.0]))
