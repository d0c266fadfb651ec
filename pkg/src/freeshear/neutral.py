"""Neutral limiting modes, the bifurcation rate dc/d(alpha^2) of unstable
modes out of a neutral mode, and the unstable-interval assembly for flows
whose K_j keep one sign at the inflection points of each value.

With eps = alpha^2 - alpha_s^2 and phi_s normalized by phi_s(h) = 1, a Green
identity between the unstable mode and phi_s gives, as c -> U_s from above,

    dc/deps = int phi_s^2 / (A + p.v. int K phi_s^2/(U - U_s)
                            + i pi sum_j K(y_j) phi_s(y_j)^2 / |U'(y_j)|)

with A = d g_r/dc at U_s.  The same formula holds with A = 0 when
U(h) = U_s (rigid-lid top condition, phi_s'(0) = 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, simpson
from scipy.interpolate import CubicHermiteSpline

from . import ode
from .errors import NoConvergence, NonSimpleRoot, NotFplus, NumericalError, UnboundedK
from .profile import KFunction, ShearProfile, classify, find_inflections, level_set
from .rayleigh import PsiEvaluator, newton
from .sturm import DIRICHLET, FREE_SURFACE, BCVariant, SturmProblem, zero_tol


@dataclass(frozen=True, eq=False)
class NeutralMode:
    alpha_s: float
    c_s: float
    phi_s: ode.GridFunction
    variant: BCVariant
    normalization: str
    lam: float
    K_sign: int
    points: tuple
    K: KFunction = field(repr=False, default=None)

    @property
    def positive(self) -> bool:
        return self.K_sign > 0


@dataclass
class CatalogEntry:
    value: float
    points: tuple
    K_sign: int
    variant: BCVariant | None
    eigenvalues: list
    modes: list
    error: str | None = None


def _sign_at_points(K: KFunction, points) -> int:
    vals = np.array([K(p) for p in points], float)
    scale = max(1.0, float(np.max(np.abs(vals)))) if vals.size else 1.0
    if vals.size == 0 or np.any(np.abs(vals) <= 1e-8 * scale):
        return 0
    if np.all(vals > 0):
        return 1
    if np.all(vals < 0):
        return -1
    return 0


def _mode(profile, K, value, variant, lam, sign, points, N) -> NeutralMode:
    prob = SturmProblem(K, profile.h, variant, N)
    nodes, v, dv = prob.eigenfunction(lam)
    if variant.tag == DIRICHLET:
        s, norm = dv[0], "phi_s'(0)=1"
        v = v.copy()
        v[-1] = 0.0
    else:
        s, norm = v[-1], "phi_s(h)=1"
    gf = ode.GridFunction(nodes, (v / s).astype(complex), (dv / s).astype(complex))
    return NeutralMode(math.sqrt(-lam), float(value), gf, variant, norm, float(lam), sign,
                       tuple(points), K)


def neutral_catalog(profile: ShearProfile, N: int = ode.DEFAULT_N) -> list:
    """Per inflection value: K sign, top condition, negative eigenvalues, modes."""
    infl = find_inflections(profile)
    out = []
    if infl.degenerate_linear:
        return out
    tv = 1e-8 * max(profile.du, 1e-300)
    for value in infl.values:
        pts = tuple(infl.points[i] for i in infl.points_of(value, tv))
        try:
            K = KFunction(profile, value, pts)
        except UnboundedK as exc:
            out.append(CatalogEntry(float(value), pts, 0, None, [], [], str(exc)))
            continue
        sign = _sign_at_points(K, pts)
        variant = BCVariant.free_surface(profile, value)
        prob = SturmProblem(K, profile.h, variant, N)
        zero = zero_tol(prob.max_abs_K)
        lams = []
        for n in range(prob.negative_count() + 1):
            lam = prob.eigenvalue(n)
            if lam >= -zero:
                break
            lams.append(lam)
        modes = [_mode(profile, K, value, variant, lam, sign, pts, N) for lam in lams]
        out.append(CatalogEntry(float(value), pts, sign, variant, lams, modes))
    return out


def neutral_modes(profile: ShearProfile, N: int = ode.DEFAULT_N) -> list:
    """One NeutralMode per (inflection value, negative eigenvalue)."""
    return [m for e in neutral_catalog(profile, N) for m in e.modes]


# -- principal values -----------------------------------------------------------

@dataclass(frozen=True)
class PVResult:
    value: float
    value_rho: float
    value_half: float
    rel_diff: float


def _excised(f, denom, roots, a, b, rho, corr):
    """Outer quadrature with symmetric holes of radius rho, plus local terms."""
    edges = [a]
    for y in roots:
        edges += [y - rho, y + rho]
    edges.append(b)
    total = mag = 0.0
    for lo, hi in zip(edges[0::2], edges[1::2]):
        if hi > lo:
            val, _ = quad(lambda t: f(t) / denom(t), lo, hi, limit=400, epsabs=1e-15, epsrel=1e-13)
            total += val
            mag += abs(val)
    return total + sum(2.0 * rho * c for c in corr), mag


def pv_integral(f, denom, roots, a: float, b: float, rho: float | None = None,
                tol: float = 1e-6) -> PVResult:
    """p.v. int_a^b f/denom for simple interior zeros ``roots`` of denom.

    ``roots`` holds (y_j, denom'(y_j)) pairs; zeros at the ends of [a, b] must
    be removable (f vanishing there) and are integrated directly.  Each hole
    of radius rho contributes 2 rho (f'/d' - f d''/(2 d'^2)) from the local
    expansion; values at rho and rho/2 are combined by Richardson and must
    agree to ``tol`` relative to the outer integral of |f/denom|.
    """
    if rho is None:
        rho = 1e-3 * (b - a)
    inner, corr = [], []
    span = b - a
    for y, slope in roots:
        if abs(slope) <= 1e-10 * max(1.0, abs(slope)) or slope == 0:
            raise NonSimpleRoot(f"denominator has a non-simple zero at y={y:.17g}")
        if y - a <= 2 * rho or b - y <= 2 * rho:
            if min(y - a, b - y) > 1e-12 * span:
                raise NumericalError(f"zero at y={y:.6g} too close to the interval end for excision")
            continue
        d = 1e-4 * span
        fp = (f(y + d) - f(y - d)) / (2 * d)
        dpp = (denom(y + d) - 2 * denom(y) + denom(y - d)) / (d * d)
        inner.append(y)
        corr.append(fp / slope - f(y) * dpp / (2 * slope * slope))
    inner_sorted = sorted(zip(inner, corr))
    ys = [t[0] for t in inner_sorted]
    cs = [t[1] for t in inner_sorted]
    if any(y2 - y1 <= 2 * rho for y1, y2 in zip(ys, ys[1:])):
        rho = 0.25 * min(y2 - y1 for y1, y2 in zip(ys, ys[1:]))
    v1, _ = _excised(f, denom, ys, a, b, rho, cs)
    v2, mag = _excised(f, denom, ys, a, b, 0.5 * rho, cs)
    # relative to the absolute size so that cancelling integrals still pass
    rel = abs(v1 - v2) / max(abs(v2), mag, 1e-300)
    if ys and rel > tol:
        raise NumericalError(f"principal value not converged: {v1:.12g} vs {v2:.12g}")
    value = (8.0 * v2 - v1) / 7.0 if ys else v2
    return PVResult(float(value), float(v1), float(v2), float(rel))


# -- bifurcation rate -------------------------------------------------------------

@dataclass(frozen=True)
class BifurcationRate:
    A: float
    B: float
    C: float
    D: float
    dcdeps: complex
    pv_value: float
    singular_sum: float
    norm_integral: float
    degenerate: bool = False
    notes: tuple = ()


def _A(profile: ShearProfile, us: float, variant: BCVariant) -> float:
    if variant.tag != FREE_SURFACE:
        return 0.0
    d = profile.Uh - us
    return 2.0 * profile.g / d ** 3 + profile.Uph / d ** 2


def bifurcation_rate(profile: ShearProfile, neutral: NeutralMode, rho: float | None = None) -> BifurcationRate:
    """dc/deps at a neutral mode, eps = alpha^2 - alpha_s^2."""
    us = neutral.c_s
    h = profile.h
    phi = neutral.phi_s
    spline = CubicHermiteSpline(phi.nodes, phi.values.real, phi.deriv_values.real)
    K = neutral.K if neutral.K is not None else KFunction(profile, us)
    roots = level_set(profile, us)
    pairs = []
    for y in roots:
        slope = float(np.real(profile.Up(y)))
        if abs(slope) <= 1e-8 * max(profile.max_abs_up, 1e-300):
            raise NonSimpleRoot(f"U'(y_j) vanishes at y={y:.17g}")
        pairs.append((y, slope))

    def f(y):
        return float(K(y)) * float(spline(y)) ** 2

    def denom(y):
        return float(np.real(profile.U(y))) - us

    pv = pv_integral(f, denom, pairs, 0.0, h, rho)
    sing = math.pi * sum(f(y) / abs(s) for y, s in pairs if 0.0 < y < h)
    A = _A(profile, us, neutral.variant)
    nodes = phi.nodes
    norm = float(simpson(phi.values.real ** 2, x=nodes))
    dphi0 = float(phi.deriv_values.real[0])
    scale_h = float(phi.values.real[-1]) ** 2 if neutral.variant.tag == FREE_SURFACE else 0.0
    A_eff = A * scale_h
    B = norm / dphi0
    C = -(pv.value + A_eff) / dphi0
    D = -sing / dphi0
    rate = -B / complex(C, D)
    notes = []
    degenerate = sing == 0.0
    if degenerate:
        notes.append("phi_s vanishes at every inflection point: rate is real")
    elif dphi0 > 0 and neutral.K_sign > 0 and not D < 0:
        notes.append("expected D < 0")
    return BifurcationRate(float(A), float(B), float(C), float(D), complex(rate), pv.value,
                           float(sing), norm, degenerate, tuple(notes))


def fd_rate_check(profile: ShearProfile, neutral: NeutralMode, rate: BifurcationRate,
                  eps_list=(-1e-3, -5e-4), N: int = 4001) -> list:
    """Newton-refined modes at alpha^2 = alpha_s^2 + eps versus the predicted rate."""
    out = []
    for eps in eps_list:
        a2 = neutral.alpha_s ** 2 + eps
        if a2 <= 0:
            raise NumericalError("alpha^2 must stay positive")
        alpha = math.sqrt(a2)
        ev = PsiEvaluator(profile, alpha, N)
        c0 = neutral.c_s + eps * rate.dcdeps
        r = 0.05 * abs(eps * rate.dcdeps) + 1e-3 * max(profile.du, 1e-300)
        ring = c0 + r * np.exp(2j * np.pi * np.arange(16) / 16)
        scale = float(np.median(np.abs(ev(ring))))
        c, ok = newton(ev, c0, scale)
        if not ok:
            raise NoConvergence(f"Newton failed at eps = {eps}")
        slope = (c - neutral.c_s) / eps
        out.append({"eps": float(eps), "alpha": alpha, "c": complex(c), "slope": complex(slope),
                    "rel_err": float(abs(slope - rate.dcdeps) / abs(rate.dcdeps))})
    return out


# -- interval assembly ------------------------------------------------------------

@dataclass
class UnstableIntervals:
    intervals: list
    neutral_catalog: list
    sequence: list
    reduced: list
    notes: list = field(default_factory=list)


def reduce_sequence(seq):
    """Merge runs: smallest of successive negatives, largest of successive positives;
    prepend 0 if the first member is positive.  ``seq`` is [(alpha, sign)] sorted."""
    red = []
    for a, s in seq:
        if red and red[-1][1] == s:
            if s > 0:
                red[-1] = (a, s)
            continue
        red.append((a, s))
    if red and red[0][1] > 0:
        red.insert(0, (0.0, -1))
    return red


def unstable_intervals(profile: ShearProfile, N: int = ode.DEFAULT_N) -> UnstableIntervals:
    """Interval structure of unstable wavenumbers from the neutral catalog."""
    cat = neutral_catalog(profile, N)
    notes = []
    if not cat:
        return UnstableIntervals([], [], [], [], ["no inflection value: stable"])
    cls = classify(profile)
    if not cls.is_F:
        notes.append("class F membership not verified on the grid")
    for e in cat:
        if e.error:
            raise NotFplus(f"inflection value {e.value:.6g}: {e.error}")
        if e.K_sign == 0:
            raise NotFplus(f"K for inflection value {e.value:.6g} vanishes or changes sign "
                           "at its inflection points")
    seq = sorted((m.alpha_s, m.K_sign) for e in cat for m in e.modes)
    red = reduce_sequence(seq)
    if red and red[-1][1] < 0:
        notes.append(f"trailing negative neutral wavenumber {red[-1][0]:.6g} dropped")
        red = red[:-1]
    intervals = [(red[i][0], red[i + 1][0]) for i in range(0, len(red) - 1, 2)]
    return UnstableIntervals(intervals, cat, seq, red, notes)
