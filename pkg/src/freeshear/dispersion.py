"""Bifurcation dispersion relation c(k) > max U, the Burns limit, and the
trivial-flow correspondence between (p0, gamma, mu) and (U, h).

Conventions for the trivial flows: p is the relative stream function with
p = p0 < 0 at the bed and p = 0 at the surface, psi = -p, and

    Gamma(p) = int_0^p gamma(-p') dp',   U(y) = c - sqrt(mu + 2 Gamma(p(y))),
    dp/dy = c - U(y).

Differentiating gives U'(y) = -gamma(psi(y)), i.e. gamma is the vorticity
U_y of the relative flow read as a function of psi with the sign fixed by
p increasing upwards.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, cumulative_simpson, quad, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import ode
from .errors import DegenerateFlux, InputError, NoRoot, Stagnation
from .profile import ShearProfile

SCAN_FACTOR = 10.0 ** 0.5


def speed_scale(profile: ShearProfile) -> float:
    return max(profile.du, math.sqrt(profile.g * profile.h))


@dataclass(frozen=True, eq=False)
class DispersionPoint:
    k: float
    c: float
    f_residual: float
    phi: ode.GridFunction | None
    status: str = "ok"
    flags: dict = field(default_factory=dict)


def condition_flags(profile: ShearProfile) -> dict:
    """U''(h) < 0 and U(h) the strict maximum (sufficient for a root to exist)."""
    h = profile.h
    y = np.linspace(0.0, h, 2001)[:-1]
    u = np.real(profile.U(y))
    return {
        "upp_h_negative": bool(float(np.real(profile.Upp(h))) < 0),
        "strict_max_at_h": bool(np.all(u < profile.Uh)),
    }


def _nodes_above(profile: ShearProfile, c: float, N: int):
    eps = c - profile.u_max
    ym = profile.y_at_max
    up = abs(float(np.real(profile.Up(ym))))
    upp = abs(float(np.real(profile.Upp(ym))))
    w = math.inf
    if up > 0:
        w = eps / up
    if upp > 0:
        w = min(w, math.sqrt(2.0 * eps / upp))
    clusters = [(ym, max(w / 20.0, 1e-14 * profile.h))] if math.isfinite(w) else []
    return ode.graded_nodes(profile.h, N, clusters, ratio=1.05)


def _check_speed(profile: ShearProfile, k: float, c: float):
    if not k > 0:
        raise InputError(f"wavenumber k must be > 0, got {k}")
    if not c > profile.u_max:
        raise InputError(f"c = {c} must exceed max U = {profile.u_max}")


def f_of_c(profile: ShearProfile, k: float, c: float, N: int = ode.DEFAULT_N) -> float:
    """f(c) = c - U(0) + k^2 int (c - U) phi_c - g phi_c(h)/(c - U(h))."""
    _check_speed(profile, k, c)
    nodes = _nodes_above(profile, c, N)
    fine = ode.interleave(nodes)
    u = np.real(profile.U(fine))
    upp = np.real(profile.Upp(fine))
    A = np.zeros((fine.size, 3, 3))
    A[:, 0, 1] = 1.0
    A[:, 1, 0] = k * k + upp / (u - c)
    A[:, 2, 0] = c - u
    z = ode.rk4_propagator(nodes, A)[:, 1].real
    phi_h, integral = z[0], z[2]
    return float(c - u[0] + k * k * integral - profile.g * phi_h / (c - profile.Uh))


def phi_c(profile: ShearProfile, k: float, c: float, N: int = ode.DEFAULT_N) -> ode.GridFunction:
    """phi_c with phi_c(0) = 0, phi_c'(0) = 1."""
    _check_speed(profile, k, c)
    nodes = _nodes_above(profile, c, N)

    def q(y):
        return (k * k + np.real(profile.Upp(y)) / (np.real(profile.U(y)) - c))[:, None]

    out = ode.march_nodes(nodes, q, np.zeros(1), np.ones(1))
    return ode.GridFunction(nodes, out["P"][:, 0].real.astype(complex),
                            out["W"][:, 0].real.astype(complex))


def solve_c_of_k(profile: ShearProfile, k: float, N: int = ode.DEFAULT_N) -> DispersionPoint:
    """Smallest root c > max U of f, bracketed on a logarithmic scan."""
    if not k > 0:
        raise InputError(f"wavenumber k must be > 0, got {k}")
    flags = condition_flags(profile)
    scale = speed_scale(profile)
    umax = profile.u_max
    eps = 1e-6 * scale
    lo = umax + eps
    f_lo = f_of_c(profile, k, lo, N)
    if f_lo >= 0:
        raise NoRoot(f"f(max U + {eps:.3g}) = {f_lo:.3g} >= 0 at k = {k}; flags {flags}")
    while True:
        hi = umax + (lo - umax) * SCAN_FACTOR
        f_hi = f_of_c(profile, k, hi, N)
        if f_hi > 0:
            break
        lo, f_lo = hi, f_hi
        if hi - umax > 1e6 * scale:
            raise NoRoot(f"no sign change of f up to c = {hi:.3g} at k = {k}; flags {flags}")
    c = brentq(lambda x: f_of_c(profile, k, x, N), lo, hi, xtol=1e-13 * scale,
               rtol=4 * np.finfo(float).eps, maxiter=200)
    res = abs(f_of_c(profile, k, c, N))
    phi = phi_c(profile, k, c, N)
    status = "ok"
    if np.any(phi.values.real[1:] <= 0):
        status = "phi-not-positive"
    return DispersionPoint(float(k), float(c), float(res), phi, status, flags)


def burns_speed(profile: ShearProfile) -> float:
    """c > max U with int_0^h dy/(U - c)^2 = 1/g."""
    h, g = profile.h, profile.g
    umax = profile.u_max
    pts = [profile.y_at_max] if 0 < profile.y_at_max < h else None

    def F(c):
        with warnings.catch_warnings():
            # near max U the integrand is sharply peaked; only the sign of F matters there
            warnings.simplefilter("ignore", IntegrationWarning)
            val, _ = quad(lambda y: 1.0 / (float(np.real(profile.U(y))) - c) ** 2, 0.0, h,
                          points=pts, limit=400, epsabs=0.0, epsrel=1e-13)
        return math.log(g * val)

    scale = speed_scale(profile)
    lo = umax + 1e-12 * scale
    while F(lo) <= 0:
        lo = umax + (lo - umax) * 1e-3
        if lo - umax < 1e-300:
            raise NoRoot("Burns integral does not exceed 1/g near max U")
    hi = umax + scale
    while F(hi) >= 0:
        hi = umax + 2.0 * (hi - umax)
    return float(brentq(F, lo, hi, xtol=1e-14 * scale, rtol=4 * np.finfo(float).eps, maxiter=300))


# -- trivial flows ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrivialFlowSpec:
    """Relative flux p0 < 0, vorticity samples on a uniform grid of [0, |p0|]."""
    p0: float
    gamma: tuple
    mu: float
    c_travel: float
    g: float = 9.81
    B: float = float("nan")

    def __post_init__(self):
        if not self.p0 < 0:
            raise InputError(f"flux p0 must be < 0, got {self.p0}")
        gam = np.asarray(self.gamma, float)
        if gam.ndim != 1 or gam.size < 4 or not np.all(np.isfinite(gam)):
            raise InputError("gamma needs at least 4 finite samples")
        object.__setattr__(self, "gamma", tuple(float(v) for v in gam))
        sp = CubicSpline(np.linspace(0.0, -self.p0, gam.size), gam, bc_type="not-a-knot")
        object.__setattr__(self, "_gamma_spline", sp)
        object.__setattr__(self, "_gamma_int", sp.antiderivative(1))
        if not self.mu > -2.0 * self.gamma_min:
            raise DegenerateFlux(f"mu = {self.mu} must exceed -2 Gamma_min = {-2 * self.gamma_min}")
        bern = self.mu + 2.0 * self.g * self.depth()
        if math.isnan(self.B):
            object.__setattr__(self, "B", bern)
        elif abs(self.B - bern) > 1e-9 * max(1.0, abs(bern)):
            raise InputError(f"Bernoulli constant {self.B} inconsistent with mu, p0, gamma ({bern})")

    @classmethod
    def from_function(cls, gamma, p0: float, mu: float, c_travel: float, g: float = 9.81,
                      n: int = 2001) -> "TrivialFlowSpec":
        s = np.linspace(0.0, -p0, n)
        vals = np.broadcast_to(np.asarray(gamma(s), float), s.shape)
        return cls(float(p0), tuple(vals), float(mu), float(c_travel), float(g))

    def gamma_of(self, s):
        return self._gamma_spline(s)

    def Gamma(self, p):
        """Gamma(p) = int_0^p gamma(-p') dp' = -int_0^{-p} gamma for p in [p0, 0]."""
        return -self._gamma_int(-np.asarray(p, float))

    @property
    def gamma_min(self) -> float:
        p = np.linspace(self.p0, 0.0, 4001)
        return float(min(0.0, np.min(self.Gamma(p))))

    def speed(self, p):
        """a(p) = sqrt(mu + 2 Gamma(p))."""
        v = self.mu + 2.0 * self.Gamma(p)
        if np.any(v <= 0):
            raise DegenerateFlux("mu + 2 Gamma(p) <= 0 on [p0, 0]")
        return np.sqrt(v)

    def depth(self) -> float:
        val, _ = quad(lambda p: 1.0 / float(self.speed(p)), self.p0, 0.0, limit=400,
                      epsabs=0.0, epsrel=1e-13)
        return float(val)


def _solve_p_of_y(spec: TrivialFlowSpec):
    def rhs(_, p):
        return spec.speed(p)

    def surface(_, p):
        return p[0]

    surface.terminal = True
    surface.direction = 1
    span = 10.0 * spec.depth() + 1.0
    sol = solve_ivp(rhs, (0.0, span), [spec.p0], method="DOP853", rtol=1e-13, atol=1e-15 * abs(spec.p0),
                    dense_output=True, events=surface)
    if sol.status != 1 or len(sol.t_events[0]) == 0:
        raise DegenerateFlux("surface streamline p = 0 not reached")
    return sol, float(sol.t_events[0][0])


def shear_from_gamma(spec: TrivialFlowSpec, n: int = 2001) -> ShearProfile:
    """Tabulated U(y) = c - sqrt(mu + 2 Gamma(p(y))) on [0, h(mu)]."""
    spec.speed(np.linspace(spec.p0, 0.0, 4001))
    sol, h = _solve_p_of_y(spec)
    y = np.linspace(0.0, h, n)
    p = np.minimum(sol.sol(y)[0], 0.0)
    p[-1] = 0.0
    u = spec.c_travel - spec.speed(p)
    return ShearProfile.tabulated(y, u, g=spec.g, spline_bc="not-a-knot")


def stream_function(profile: ShearProfile, c_travel: float, y):
    """psi(y) = -int_y^h (U - c) dy' (zero at the surface, |p0| at the bed)."""
    y = np.asarray(y, float)
    A = profile.antiderivative
    return -((A(profile.h) - A(y)) - c_travel * (profile.h - y))


def gamma_from_shear(profile: ShearProfile, c_travel: float, n: int = 2001) -> TrivialFlowSpec:
    """Flux, vorticity function and mu of the relative flow U - c."""
    if not c_travel > profile.u_max:
        raise Stagnation(f"c_travel = {c_travel} must exceed max U = {profile.u_max}")
    h = profile.h
    A = profile.antiderivative
    p0 = float(A(h) - A(0.0) - c_travel * h)
    s = np.linspace(0.0, -p0, n)
    # invert psi(y) = s; psi decreases from |p0| to 0, psi' = U - c < 0
    yy = h * (1.0 - s / -p0)
    for _ in range(60):
        r = stream_function(profile, c_travel, yy) - s
        d = np.real(profile.U(yy)) - c_travel
        step = r / d
        yy = np.clip(yy - step, 0.0, h)
        if np.max(np.abs(step)) < 1e-15 * h:
            break
    yy[0], yy[-1] = h, 0.0
    gam = -np.real(profile.Up(yy))
    mu = (profile.Uh - c_travel) ** 2
    return TrivialFlowSpec(p0, tuple(gam), mu, float(c_travel), profile.g)


def bifurcation_system_residual(profile: ShearProfile, point: DispersionPoint) -> dict:
    """Residuals of the transformed bifurcation system for M = phi/(c - U).

    With a = c - U:  a^2 M_y = phi' a + phi U' equals a^3 M_p, so the interior
    equation integrates to a^2 M_y (y) - a^2 M_y (0) = k^2 int_0^y a^2 M dy and
    the surface condition reads mu M_y(h) = g M(h).
    """
    c, k = point.c, point.k
    y = point.phi.nodes
    v = point.phi.values.real
    dv = point.phi.deriv_values.real
    a = c - np.real(profile.U(y))
    flux = dv * a + v * np.real(profile.Up(y))
    M = v / a
    integral = cumulative_simpson(a * a * M, x=y, initial=0.0)
    interior = np.max(np.abs(flux - flux[0] - k * k * integral)) / np.max(np.abs(flux))
    mu = (profile.Uh - c) ** 2
    My_h = flux[-1] / a[-1] ** 2
    top = abs(mu * My_h - profile.g * M[-1]) / (abs(mu * My_h) + abs(profile.g * M[-1]))
    return {"interior": float(interior), "surface": float(top), "bed": float(abs(M[0]))}
