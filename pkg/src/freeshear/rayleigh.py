"""Unstable modes of the free-surface Rayleigh system.

Zeros of Phi(alpha, c) = phi1(0) + g_r(c) phi2(0) in the upper half plane are
the unstable wave speeds (phi1, phi2 normalized at the surface).  Counting and
Newton refinement work with the pole-free multiple

    Psi(c) = (U(h) - c)^2 phi1(0) + (g + U'(h)(U(h) - c)) phi2(0),

which has the same zeros in the upper half plane (g_r has its only pole at
the real point c = U(h)).  Psi is evaluated along the deformed path of
:mod:`freeshear.ode`, i.e. as the continuation from the upper half plane, so
it stays smooth right down to the real axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import ode
from .errors import BoundaryZero, CriticalLayer, DegenerateBoundary, NoConvergence
from .profile import ShearProfile, level_set

DEPTH_CAP = 12
CHAMFER = 1e-5
MAX_ITER = 50


def g_r(profile: ShearProfile, c):
    d = profile.Uh - c
    return profile.g / d ** 2 + profile.Uph / d


def g_s(profile: ShearProfile, c):
    d = profile.Uh - c
    return d ** 2 / (profile.g + profile.Uph * d)


def delta_floor(profile: ShearProfile) -> float:
    return 1e-8 * max(profile.du, 1e-300)


@dataclass(frozen=True)
class SearchRegion:
    re_range: tuple
    im_range: tuple
    grid: tuple = (64, 64)

    def __post_init__(self):
        if not self.im_range[0] > 0:
            raise ValueError("search region must stay above the real axis")

    @classmethod
    def semicircle_box(cls, profile: ShearProfile) -> "SearchRegion":
        return cls((profile.u_min, profile.u_max), (delta_floor(profile), 0.5 * profile.du))

    @property
    def rect(self):
        return (self.re_range[0], self.re_range[1], self.im_range[0], self.im_range[1])


@dataclass(frozen=True, eq=False)
class RayleighMode:
    alpha: float
    c: complex
    phi: ode.GridFunction
    growth_rate: float
    residuals: dict
    rigid: bool = False


@dataclass
class SearchResult:
    modes: list
    count: int
    notes: list = field(default_factory=list)
    failures: list = field(default_factory=list)


# -- Phi and its scaled form -----------------------------------------------------

def big_phi(profile: ShearProfile, alpha: float, c: complex, N: int = ode.DEFAULT_N,
            branch: str = "auto") -> complex:
    """Phi(alpha, c) = phi1(0) + g_r(c) phi2(0)."""
    c = complex(c)
    if abs(profile.Uh - c) < ode.tol_crit(profile) or abs(profile.Uh - c) == 0:
        raise DegenerateBoundary(f"g_r has a pole at c = U(h) = {profile.Uh:.17g}")
    sign = ode.choose_sign(profile, c, branch)
    if sign == 0 and c.imag == 0 and not profile.linear:
        if profile.u_min - ode.tol_crit(profile) <= c.real <= profile.u_max + ode.tol_crit(profile):
            raise CriticalLayer(f"c = {c.real:.17g} lies in the range of U")
    r = ode.top_pair_at_bottom(profile, alpha, [c], N, sign=sign)
    return complex(r["phi1"][0] + g_r(profile, c) * r["phi2"][0])


class PsiEvaluator:
    """Batch evaluation of Psi (or of the rigid-wall miss function) on one path."""

    def __init__(self, profile: ShearProfile, alpha: float, N: int = ode.DEFAULT_N,
                 rigid: bool = False, sign: int = 1):
        self.profile = profile
        self.alpha = float(alpha)
        self.rigid = rigid
        self.path = ode.make_path(profile, N, sign)
        self.n_evals = 0

    def _combine(self, c, r, deriv):
        p = self.profile
        if self.rigid:
            # bottom-shooting miss phi_b(h) equals -phi2(0) by the unit Wronskian
            v = -r["phi2"]
            return (v, -r["chi2"]) if deriv else v
        d = p.Uh - c
        a1, a2 = d * d, p.g + p.Uph * d
        v = a1 * r["phi1"] + a2 * r["phi2"]
        if not deriv:
            return v
        dv = -2.0 * d * r["phi1"] + a1 * r["chi1"] - p.Uph * r["phi2"] + a2 * r["chi2"]
        return v, dv

    def __call__(self, c, deriv: bool = False):
        c = np.atleast_1d(np.asarray(c, complex))
        self.n_evals += c.size
        out_v, out_d = [], []
        for k in range(0, c.size, 512):
            cc = c[k:k + 512]
            r = ode.top_pair_at_bottom(self.profile, self.alpha, cc, deriv=deriv, path=self.path)
            res = self._combine(cc, r, deriv)
            if deriv:
                out_v.append(res[0])
                out_d.append(res[1])
            else:
                out_v.append(res)
        v = np.concatenate(out_v)
        return (v, np.concatenate(out_d)) if deriv else v


# -- argument principle ------------------------------------------------------------

def _polygon(profile: ShearProfile, rect):
    """Rectangle vertices with corners next to the branch points U_min, U_max cut off."""
    re0, re1, im0, im1 = rect
    verts = [complex(re0, im0), complex(re1, im0), complex(re1, im1), complex(re0, im1)]
    r = CHAMFER * max(profile.du, 1e-300)
    r = min(r, 0.25 * (re1 - re0), 0.25 * (im1 - im0))
    out = []
    for k, v in enumerate(verts):
        near = any(abs(v - b) < 2 * CHAMFER * max(profile.du, 1e-300) for b in (profile.u_min, profile.u_max))
        if near and r > 0:
            prev, nxt = verts[k - 1], verts[(k + 1) % 4]
            out.append(v + r * (prev - v) / abs(prev - v))
            out.append(v + r * (nxt - v) / abs(nxt - v))
        else:
            out.append(v)
    return out


class _Loop:
    def __init__(self, verts):
        self.verts = list(verts)
        ends = self.verts[1:] + self.verts[:1]
        self.lengths = np.array([abs(b - a) for a, b in zip(self.verts, ends)])
        self.cum = np.concatenate([[0.0], np.cumsum(self.lengths)])
        self.total = float(self.cum[-1])

    def at(self, t):
        t = np.mod(np.asarray(t, float), self.total)
        k = np.clip(np.searchsorted(self.cum, t, side="right") - 1, 0, len(self.verts) - 1)
        a = np.array(self.verts)[k]
        b = np.array(self.verts[1:] + self.verts[:1])[k]
        f = (t - self.cum[k]) / self.lengths[k]
        return a + (b - a) * f

    def initial(self, n_side):
        ts = [self.cum[k] + self.lengths[k] * np.arange(n_side) / n_side for k in range(len(self.verts))]
        return np.concatenate(ts)


def _arg_increments(vals):
    v = np.concatenate([vals, vals[:1]])
    ratio = v[1:] / v[:-1]
    return np.angle(ratio), np.abs(np.log(np.abs(ratio)))


def contour_winding(fun, verts, n_side: int = 64, max_points: int = 40000,
                    max_doublings: int = 4):
    """Winding number of fun around the closed polygon; returns (int, raw).

    Samples start at n_side per side; any segment whose argument increment
    exceeds pi/3 (or whose modulus changes by more than a factor 3) is bisected.
    The total is then recomputed after inserting all midpoints until two
    successive integers agree and the raw value is within 0.2 of an integer.
    """
    loop = _Loop(verts)
    t = loop.initial(n_side)
    vals = fun(loop.at(t))

    def refine(t, vals):
        for _ in range(60):
            darg, dmag = _arg_increments(vals)
            bad = (np.abs(darg) > np.pi / 3) | (dmag > math.log(3.0))
            if not np.any(bad):
                return t, vals
            if t.size + int(bad.sum()) > max_points:
                raise BoundaryZero("contour refinement limit reached; Phi nearly vanishes on the boundary")
            tn = np.concatenate([t[1:], [t[0] + loop.total]])
            mids = 0.5 * (t[bad] + tn[bad])
            mv = fun(loop.at(mids))
            t = np.concatenate([t, np.mod(mids, loop.total)])
            vals = np.concatenate([vals, mv])
            o = np.argsort(t, kind="stable")
            t, vals = t[o], vals[o]
        raise BoundaryZero("contour refinement did not settle")

    def check(vals):
        scale = np.median(np.abs(vals))
        if not np.all(np.isfinite(vals)) or np.min(np.abs(vals)) < 1e-14 * scale:
            raise BoundaryZero("Phi vanishes on the contour; shift or shrink the rectangle")

    check(vals)
    t, vals = refine(t, vals)
    raw = float(np.sum(_arg_increments(vals)[0]) / (2 * np.pi))
    prev = round(raw)
    for _ in range(max_doublings):
        tn = np.concatenate([t[1:], [t[0] + loop.total]])
        mids = 0.5 * (t + tn)
        mv = fun(loop.at(mids))
        t2 = np.concatenate([t, np.mod(mids, loop.total)])
        v2 = np.concatenate([vals, mv])
        o = np.argsort(t2, kind="stable")
        t, vals = t2[o], v2[o]
        check(vals)
        t, vals = refine(t, vals)
        raw = float(np.sum(_arg_increments(vals)[0]) / (2 * np.pi))
        if round(raw) == prev and abs(raw - round(raw)) < 0.2:
            return int(round(raw)), raw, float(np.median(np.abs(vals)))
        prev = round(raw)
    raise BoundaryZero(f"winding number did not stabilize (last raw value {raw:.3f})")


def winding_count(profile: ShearProfile, alpha: float, region=None, N: int = ode.DEFAULT_N,
                  rigid: bool = False, evaluator: PsiEvaluator | None = None) -> int:
    """Number of zeros of Phi(alpha, .) inside the rectangle ``region``.

    ``region`` is a SearchRegion or a tuple (re0, re1, im0, im1) with im0 > 0;
    default is the bounding box of the semicircle.
    """
    if region is None:
        region = SearchRegion.semicircle_box(profile)
    rect = region.rect if isinstance(region, SearchRegion) else tuple(region)
    if rect[2] <= 0:
        raise ValueError("rectangle must lie in the upper half plane")
    ev = evaluator or PsiEvaluator(profile, alpha, N, rigid)
    return contour_winding(ev, _polygon(profile, rect))[0]


# -- Newton --------------------------------------------------------------------

def newton(ev: PsiEvaluator, c0: complex, scale: float, max_iter: int = MAX_ITER,
           max_step: float | None = None, box=None):
    """Newton on Psi with the variational derivative; returns (c, converged).

    With ``box`` = (re0, re1, im0, im1) the iteration gives up as soon as it
    leaves the box.
    """
    c = complex(c0)
    du = max(ev.profile.du, 1e-300)
    for it in range(max_iter):
        if box is not None and not (box[0] <= c.real <= box[1] and box[2] <= c.imag <= box[3]):
            return c, False
        try:
            v, dv = ev([c], deriv=True)
        except CriticalLayer:
            return c, False
        v, dv = complex(v[0]), complex(dv[0])
        if not (np.isfinite(v) and np.isfinite(dv)) or dv == 0:
            return c, False
        if abs(v) < 1e-12 * scale:
            return c, True
        if it >= 20 and abs(v) > 1e-6 * scale:
            return c, False
        step = v / dv
        if max_step is not None and abs(step) > max_step:
            step *= max_step / abs(step)
        c -= step
        if abs(step) < 1e-15 * du:
            # rounding floor of Psi reached
            v = complex(ev([c])[0])
            return c, abs(v) < 1e-8 * scale
    return c, False


def refine_mode(profile: ShearProfile, alpha: float, c0: complex, N: int = ode.DEFAULT_N,
                rigid: bool = False, scale: float | None = None) -> complex:
    """Newton refinement of a zero of Phi near c0 (continuation from the upper
    half plane, so c may sit on or slightly below the real axis)."""
    ev = PsiEvaluator(profile, alpha, N, rigid)
    if scale is None:
        pts = c0 + 0.05 * max(profile.du, 1e-300) * np.exp(2j * np.pi * np.arange(16) / 16)
        scale = float(np.median(np.abs(ev(pts))))
    c, ok = newton(ev, c0, scale)
    if not ok:
        raise NoConvergence(f"Newton did not converge from c0 = {c0:.6g} at alpha = {alpha:.6g}")
    return c


# -- eigenfunction on the real axis ----------------------------------------------

def _critical_clusters(profile: ShearProfile, c: complex):
    ci = abs(c.imag)
    if ci == 0:
        return []
    h = profile.h
    pts = level_set(profile, c.real)
    if not pts:
        ends = [0.0, h]
        pts = [min(ends, key=lambda t: abs(float(np.real(profile.U(t))) - c.real))]
    out = []
    for y in pts:
        up = abs(float(np.real(profile.Up(y))))
        upp = abs(float(np.real(profile.Upp(y))))
        w = math.inf
        if up > 0:
            w = ci / up
        if upp > 0:
            w = min(w, math.sqrt(2 * ci / upp))
        if math.isfinite(w):
            out.append((y, max(w / 50.0, 1e-13 * h)))
    return out


def real_axis_solution(profile: ShearProfile, alpha: float, c: complex, init, at: str,
                       N: int = ode.DEFAULT_N):
    """Solution on real nodes graded around the critical points U(y) = Re c."""
    nodes = ode.graded_nodes(profile.h, N, _critical_clusters(profile, c), ratio=1.02)

    def q(y):
        with np.errstate(divide="ignore", invalid="ignore"):
            upp = np.real(profile.Upp(y))
            coef = np.where(upp == 0, 0.0, upp / (np.real(profile.U(y)) - c))
        return (alpha * alpha + coef)[:, None]

    out = ode.march_nodes(nodes, q, np.array([init[0]], complex), np.array([init[1]], complex),
                          backward=(at == "top"))
    return nodes, out["P"][:, 0], out["W"][:, 0]


def _integrals(profile, alpha, c, nodes, v, dv, q):
    u = np.real(profile.U(nodes))
    upp = np.real(profile.Upp(nodes))
    a2 = np.abs(v) ** 2
    den = np.abs(u - c) ** 2
    t1 = simpson(np.abs(dv) ** 2, x=nodes)
    t2 = alpha ** 2 * simpson(a2, x=nodes)
    t3 = simpson(upp * (u - q) / den * a2, x=nodes)
    t3abs = simpson(np.abs(upp * (u - q)) / den * a2, x=nodes)
    im_int = simpson(upp / den * a2, x=nodes)
    im_abs = simpson(np.abs(upp) / den * a2, x=nodes)
    return t1, t2, t3, t3abs, im_int, im_abs


def check_identities(profile: ShearProfile, mode: RayleighMode, q: float | None = None) -> dict:
    """Relative residuals of the two integral identities satisfied by an
    unstable mode: the q-family identity and its imaginary-part companion."""
    if q is None:
        q = profile.u_min - 1.0
    c = complex(mode.c)
    phi = mode.phi
    nodes, v, dv = phi.nodes, phi.values, phi.deriv_values
    t1, t2, t3, t3abs, im_int, im_abs = _integrals(profile, mode.alpha, c, nodes, v, dv, q)
    ph2 = abs(v[-1]) ** 2
    if mode.rigid:
        gr = 0.0
    else:
        gr = complex(g_r(profile, c))
    rhs = (gr.real + (c.real - q) / c.imag * gr.imag) * ph2
    lhs = t1 + t2 + t3
    jq = abs(lhs - rhs) / (t1 + t2 + t3abs + abs(rhs))
    il = c.imag * im_int
    ir = gr.imag * ph2
    imag = abs(il - ir) / (abs(c.imag) * im_abs + abs(ir) + 1e-300)
    return {"q": float(q), "identity_Jq": float(jq), "identity_imag": float(imag),
            "lhs": float(lhs), "rhs": float(rhs)}


def semicircle_margin(profile: ShearProfile, c: complex) -> float:
    mid = 0.5 * (profile.u_min + profile.u_max)
    rad = 0.5 * profile.du
    return float(rad * rad - ((c.real - mid) ** 2 + c.imag ** 2))


def build_mode(profile: ShearProfile, alpha: float, c: complex, rigid: bool = False,
               N: int = ode.DEFAULT_N) -> RayleighMode:
    """Eigenfunction on the real axis plus residual diagnostics."""
    c = complex(c)
    d = profile.Uh - c
    top = (0.0, 1.0) if rigid else (d * d, profile.g + profile.Uph * d)
    nodes, v, dv = real_axis_solution(profile, alpha, c, top, "top", N)
    k = int(np.argmax(np.abs(v)))
    norm = v[k]
    v, dv = v / norm, dv / norm
    # independent shot from the bottom checks the surface condition
    nb, vb, dvb = real_axis_solution(profile, alpha, c, (0.0, 1.0), "bottom", N)
    if rigid:
        bc_top = abs(vb[-1]) / max(np.max(np.abs(vb)), 1e-300)
    else:
        lhs = d * d * dvb[-1]
        rhs = (profile.g + profile.Uph * d) * vb[-1]
        bc_top = abs(lhs - rhs) / max(abs(lhs) + abs(rhs), 1e-300)
    bc_bottom = abs(v[0])
    phi = ode.GridFunction(nodes, v, dv)
    mode = RayleighMode(float(alpha), c, phi, float(alpha * c.imag), {}, rigid)
    ident = check_identities(profile, mode)
    res = {"bc_top": float(bc_top), "bc_bottom": float(bc_bottom),
           "identity_Jq": ident["identity_Jq"], "identity_imag": ident["identity_imag"],
           "semicircle_margin": semicircle_margin(profile, c)}
    return RayleighMode(float(alpha), c, phi, float(alpha * c.imag), res, rigid)


# -- search ---------------------------------------------------------------------------

def _split(rect):
    re0, re1, im0, im1 = rect
    if (re1 - re0) >= (im1 - im0):
        m = 0.5 * (re0 + re1)
        return "re", m, (re0, m, im0, im1), (m, re1, im0, im1)
    m = 0.5 * (im0 + im1) if im1 / im0 < 100 else math.sqrt(im0 * im1)
    return "im", m, (re0, re1, im0, m), (re0, re1, m, im1)


def _split_shifted(rect, frac):
    re0, re1, im0, im1 = rect
    if (re1 - re0) >= (im1 - im0):
        m = re0 + frac * (re1 - re0)
        return (re0, m, im0, im1), (m, re1, im0, im1)
    m = im0 + frac * (im1 - im0)
    return (re0, re1, im0, m), (re0, re1, m, im1)


def search_modes(profile: ShearProfile, alpha: float, N: int = ode.DEFAULT_N,
                 rigid: bool = False, depth_cap: int = DEPTH_CAP, region=None,
                 build: bool = True) -> SearchResult:
    """Subdivide the semicircle box until cells hold 0 or 1 zeros; Newton each."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if profile.du <= 0:
        return SearchResult([], 0, ["constant profile: no unstable modes"])
    if region is None:
        region = SearchRegion.semicircle_box(profile)
    rect0 = region.rect if isinstance(region, SearchRegion) else tuple(region)
    ev = PsiEvaluator(profile, alpha, N, rigid)
    notes, failures, found = [], [], []

    def count(rect):
        return contour_winding(ev, _polygon(profile, rect))

    n0, _, scale = count(rect0)
    if n0 <= 0:
        if n0 < 0:
            notes.append(f"negative winding count {n0} on the search box")
        return SearchResult([], max(n0, 0), notes)

    tol_in = 1e-9 * profile.du
    floor = delta_floor(profile)

    def inside(c, rect):
        return (rect[0] - tol_in <= c.real <= rect[1] + tol_in and
                rect[2] - tol_in <= c.imag <= rect[3] + tol_in)

    def try_newton(rect):
        re0, re1, im0, im1 = rect
        diam = math.hypot(re1 - re0, im1 - im0)
        w, hgt = re1 - re0, im1 - im0
        box = (re0 - 0.5 * w, re1 + 0.5 * w, im0 - 0.5 * hgt, im1 + 0.5 * hgt)
        for c0 in (complex(0.5 * (re0 + re1), 0.5 * (im0 + im1)),
                   complex(0.5 * (re0 + re1), im0 + 0.1 * (im1 - im0))):
            c, ok = newton(ev, c0, scale, max_step=0.5 * diam, box=box)
            if ok and inside(c, rect) and c.imag > floor:
                return c
        return None

    stack = [(rect0, n0, 0, False)]
    while stack:
        rect, n, depth, retried = stack.pop()
        if n == 0:
            continue
        if n == 1:
            c = try_newton(rect)
            if c is not None:
                if all(abs(c - f) > 1e-9 * profile.du for f in found):
                    found.append(c)
                continue
        if depth >= depth_cap:
            failures.append(rect)
            notes.append(f"subdivision depth cap {depth_cap} reached with {n} zero(s) in {rect}")
            continue
        for frac in (0.5, 0.5 + 0.0731, 0.5 - 0.0419):
            if frac == 0.5:
                _, _, a, b = _split(rect)
            else:
                a, b = _split_shifted(rect, frac)
            try:
                na = count(a)[0]
                nb = count(b)[0]
            except BoundaryZero:
                continue
            break
        else:
            failures.append(rect)
            notes.append(f"could not split {rect} away from a boundary zero")
            continue
        if na + nb != n:
            notes.append(f"count additivity mismatch in {rect}: {n} != {na} + {nb}")
        stack.append((b, nb, depth + 1, False))
        stack.append((a, na, depth + 1, False))
    found.sort(key=lambda z: (z.real, z.imag))
    modes = [build_mode(profile, alpha, c, rigid, N) for c in found] if build else []
    res = SearchResult(modes, n0, notes, failures)
    if not build:
        res.modes = found
    if failures:
        raise NoConvergence("; ".join(notes), modes)
    return res


def find_unstable_modes(profile: ShearProfile, alpha: float, N: int = ode.DEFAULT_N,
                        depth_cap: int = DEPTH_CAP) -> list:
    """All unstable modes (Im c > delta_floor) at wavenumber alpha."""
    return search_modes(profile, alpha, N, False, depth_cap).modes


def find_rigid_wall_modes(profile: ShearProfile, alpha: float, N: int = ode.DEFAULT_N,
                          depth_cap: int = DEPTH_CAP) -> list:
    """As find_unstable_modes with phi(0) = phi(h) = 0."""
    return search_modes(profile, alpha, N, True, depth_cap).modes
