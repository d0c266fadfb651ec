"""Shear profiles U(y) on [0, h], inflection structure and flow classes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

from .errors import NonSimpleRoot, ProfileError, UnboundedK

DEFAULT_G = 9.81
KINDS = ("sine", "poly", "tabulated")

_N_STATS = 4001


def _real(x):
    return float(np.real(x))


@dataclass(frozen=True, eq=False)
class ShearProfile:
    """Velocity profile U on [0, h] with gravity g.

    Use the constructors :meth:`sine`, :meth:`poly`, :meth:`tabulated` or
    :meth:`from_dict`.  Analytic kinds (sine, poly) accept complex ``y`` in
    ``U``/``Up``/``Upp``, which the Rayleigh kernel uses to integrate along a
    complex path.
    """

    kind: str
    h: float
    g: float = DEFAULT_G
    a: float = 0.0
    b: float = 0.0
    y0: float = 0.0
    offset: float = 0.0
    coeffs: tuple = ()
    y_tab: tuple = ()
    u_tab: tuple = ()
    spline_bc: str = "natural"
    _impl: Any = field(default=None, repr=False)

    # -- construction ---------------------------------------------------------
    def __post_init__(self):
        if self.kind not in KINDS:
            raise ProfileError(f"unknown profile kind {self.kind!r}")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ProfileError(f"depth h must be finite and > 0, got {self.h}")
        if not (np.isfinite(self.g) and self.g > 0):
            raise ProfileError(f"gravity g must be finite and > 0, got {self.g}")
        if self.kind == "sine":
            for nm in ("a", "b", "y0", "offset"):
                if not np.isfinite(getattr(self, nm)):
                    raise ProfileError(f"sine parameter {nm} must be finite")
            impl = None
        elif self.kind == "poly":
            if len(self.coeffs) == 0 or not np.all(np.isfinite(self.coeffs)):
                raise ProfileError("poly needs a nonempty list of finite coeffs")
            p = Polynomial(np.asarray(self.coeffs, float))
            impl = (p, p.deriv(1), p.deriv(2), p.deriv(3), p.integ(lbnd=0.0))
        else:
            y = np.asarray(self.y_tab, float)
            u = np.asarray(self.u_tab, float)
            if y.ndim != 1 or y.size < 4 or y.size != u.size:
                raise ProfileError("tabulated profile needs equal-length y and u with >= 4 samples")
            if not (np.all(np.isfinite(y)) and np.all(np.isfinite(u))):
                raise ProfileError("tabulated samples must be finite")
            if y[0] != 0.0 or np.any(np.diff(y) <= 0):
                raise ProfileError("tabulated y must start at 0 and be strictly increasing")
            if self.spline_bc not in ("natural", "not-a-knot"):
                raise ProfileError(f"unsupported spline end condition {self.spline_bc!r}")
            sp = CubicSpline(y, u, bc_type=self.spline_bc)
            impl = (sp, sp.derivative(1), sp.derivative(2), sp.antiderivative(1))
        object.__setattr__(self, "_impl", impl)
        self._compute_stats()

    @classmethod
    def sine(cls, a=1.0, b=math.pi, h=1.0, g=DEFAULT_G, y0=None, offset=0.0):
        """U(y) = offset + a*sin(b*(y - y0)), y0 = h/2 by default."""
        return cls(kind="sine", h=float(h), g=float(g), a=float(a), b=float(b),
                   y0=float(h) / 2 if y0 is None else float(y0), offset=float(offset))

    @classmethod
    def poly(cls, coeffs: Sequence[float], h=1.0, g=DEFAULT_G):
        """Polynomial with coefficients in increasing powers of y."""
        return cls(kind="poly", h=float(h), g=float(g), coeffs=tuple(float(c) for c in coeffs))

    @classmethod
    def tabulated(cls, y, u, g=DEFAULT_G, spline_bc="natural"):
        y = tuple(float(v) for v in y)
        if len(y) < 4:
            raise ProfileError("tabulated profile needs at least 4 samples")
        return cls(kind="tabulated", h=y[-1], g=float(g), y_tab=y,
                   u_tab=tuple(float(v) for v in u), spline_bc=spline_bc)

    @classmethod
    def from_dict(cls, d: dict, g: float | None = None) -> "ShearProfile":
        """Build from the JSON profile description; ``g`` overrides the file."""
        if not isinstance(d, dict):
            raise ProfileError("profile description must be a JSON object")
        kind = d.get("kind")
        gg = g if g is not None else d.get("g", DEFAULT_G)
        try:
            gg = float(gg)
            if kind == "sine":
                for key in ("a", "b", "h"):
                    if key not in d:
                        raise ProfileError(f"sine profile is missing {key!r}")
                return cls.sine(a=float(d["a"]), b=float(d["b"]), h=float(d["h"]), g=gg,
                                y0=d.get("shift"), offset=float(d.get("offset", 0.0)))
            if kind == "poly":
                if "coeffs" not in d or "h" not in d:
                    raise ProfileError("poly profile needs 'coeffs' and 'h'")
                if not isinstance(d["coeffs"], list):
                    raise ProfileError("'coeffs' must be a list")
                return cls.poly(d["coeffs"], h=float(d["h"]), g=gg)
            if kind == "tabulated":
                if "y" not in d or "u" not in d:
                    raise ProfileError("tabulated profile needs 'y' and 'u'")
                if not isinstance(d["y"], list) or not isinstance(d["u"], list):
                    raise ProfileError("'y' and 'u' must be lists")
                return cls.tabulated(d["y"], d["u"], g=gg, spline_bc=d.get("spline", "natural"))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ProfileError):
                raise
            raise ProfileError(f"bad numeric field in profile: {exc}") from None
        raise ProfileError(f"unknown profile kind {kind!r}; expected one of {KINDS}")

    def to_dict(self) -> dict:
        if self.kind == "sine":
            return {"kind": "sine", "a": self.a, "b": self.b, "h": self.h, "g": self.g,
                    "shift": self.y0, "offset": self.offset}
        if self.kind == "poly":
            return {"kind": "poly", "coeffs": list(self.coeffs), "h": self.h, "g": self.g}
        return {"kind": "tabulated", "y": list(self.y_tab), "u": list(self.u_tab), "g": self.g,
                "spline": self.spline_bc}

    def shifted(self, c0: float) -> "ShearProfile":
        """The Galilean-shifted profile U + c0."""
        if self.kind == "sine":
            return ShearProfile.sine(self.a, self.b, self.h, self.g, self.y0, self.offset + c0)
        if self.kind == "poly":
            cs = list(self.coeffs)
            cs[0] += c0
            return ShearProfile.poly(cs, self.h, self.g)
        return ShearProfile.tabulated(self.y_tab, np.asarray(self.u_tab) + c0, self.g, self.spline_bc)

    def scaled(self, s: float) -> "ShearProfile":
        """U -> s*U together with g -> s^2*g."""
        g = self.g * s * s
        if self.kind == "sine":
            return ShearProfile.sine(self.a * s, self.b, self.h, g, self.y0, self.offset * s)
        if self.kind == "poly":
            return ShearProfile.poly([c * s for c in self.coeffs], self.h, g)
        return ShearProfile.tabulated(self.y_tab, np.asarray(self.u_tab) * s, g, self.spline_bc)

    def with_g(self, g: float) -> "ShearProfile":
        d = self.to_dict()
        return ShearProfile.from_dict(d, g=g)

    # -- evaluation -----------------------------------------------------------
    @property
    def analytic(self) -> bool:
        """True when U extends to complex y (sine and poly)."""
        return self.kind != "tabulated"

    def U(self, y):
        if self.kind == "sine":
            return self.offset + self.a * np.sin(self.b * (y - self.y0))
        if self.kind == "poly":
            return self._impl[0](y)
        return self._impl[0](np.real(y))

    def Up(self, y):
        if self.kind == "sine":
            return self.a * self.b * np.cos(self.b * (y - self.y0))
        if self.kind == "poly":
            return self._impl[1](y)
        return self._impl[1](np.real(y))

    def Upp(self, y):
        if self.kind == "sine":
            return -self.a * self.b ** 2 * np.sin(self.b * (y - self.y0))
        if self.kind == "poly":
            return self._impl[2](y)
        return self._impl[2](np.real(y))

    def Uppp(self, y):
        """Third derivative: analytic for sine/poly, else a Richardson-extrapolated
        central difference of U'' with step h*1e-4."""
        if self.kind == "sine":
            return -self.a * self.b ** 3 * np.cos(self.b * (y - self.y0))
        if self.kind == "poly":
            return self._impl[3](y)
        y = np.asarray(y, float)
        d = self.h * 1e-4

        def cd(step):
            lo = np.clip(y - step, 0.0, self.h)
            hi = np.clip(y + step, 0.0, self.h)
            return (self.Upp(hi) - self.Upp(lo)) / (hi - lo)

        return (4.0 * cd(d / 2) - cd(d)) / 3.0

    def antiderivative(self, y):
        """F(y) = integral of U from 0 to y."""
        if self.kind == "sine":
            b = self.b
            if b == 0.0:
                return (self.offset + self.a * math.sin(0.0)) * y
            return self.offset * y - (self.a / b) * (np.cos(b * (y - self.y0)) - math.cos(-b * self.y0))
        if self.kind == "poly":
            return self._impl[4](y)
        return self._impl[3](y)

    # -- summary statistics ---------------------------------------------------
    def _compute_stats(self):
        y = np.linspace(0.0, self.h, _N_STATS)
        u = np.real(self.U(y))
        up = np.real(self.Up(y))
        upp = np.real(self.Upp(y))

        def refine(idx, sign):
            if idx == 0 or idx == y.size - 1:
                return float(y[idx])
            res = minimize_scalar(lambda t: -sign * _real(self.U(t)),
                                  bounds=(y[idx - 1], y[idx + 1]), method="bounded",
                                  options={"xatol": 1e-14 * self.h})
            return float(res.x)

        ymax = refine(int(np.argmax(u)), +1)
        ymin = refine(int(np.argmin(u)), -1)
        umax = max(float(np.max(u)), _real(self.U(ymax)))
        umin = min(float(np.min(u)), _real(self.U(ymin)))
        scale_u = max(umax - umin, float(np.max(np.abs(u))), 1e-300)
        max_upp = float(np.max(np.abs(upp)))
        stats = {
            "u_min": umin, "u_max": umax, "y_min": ymin, "y_max": ymax,
            "max_abs_up": float(np.max(np.abs(up))), "max_abs_upp": max_upp,
            "linear": bool(max_upp * self.h ** 2 <= 1e-12 * scale_u),
        }
        object.__setattr__(self, "_stats", stats)

    @property
    def u_min(self) -> float:
        return self._stats["u_min"]

    @property
    def u_max(self) -> float:
        return self._stats["u_max"]

    @property
    def y_at_max(self) -> float:
        return self._stats["y_max"]

    @property
    def du(self) -> float:
        """max U - min U."""
        return self.u_max - self.u_min

    @property
    def max_abs_up(self) -> float:
        return self._stats["max_abs_up"]

    @property
    def max_abs_upp(self) -> float:
        return self._stats["max_abs_upp"]

    @property
    def linear(self) -> bool:
        """U'' vanishes identically (to rounding)."""
        return self._stats["linear"]

    @property
    def Uh(self) -> float:
        return _real(self.U(self.h))

    @property
    def Uph(self) -> float:
        return _real(self.Up(self.h))

    def summary(self) -> dict:
        d = self.to_dict()
        if self.kind == "tabulated":
            d = {"kind": "tabulated", "n_samples": len(self.y_tab), "g": self.g,
                 "spline": self.spline_bc}
        d.update({"h": self.h, "u_min": self.u_min, "u_max": self.u_max})
        return d


def load_profile(path, g: float | None = None) -> ShearProfile:
    """Read a JSON profile description; parse errors carry line/column."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ProfileError(f"cannot read profile file {path}: {exc.strerror}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return ShearProfile.from_dict(d, g=g)


def parse_builtin(spec: str, g: float | None = None) -> ShearProfile:
    """``sine:a,b,h`` (b may be written as a multiple of pi, e.g. ``1pi``)."""
    name, _, rest = spec.partition(":")
    if name != "sine":
        raise ProfileError(f"unknown builtin {name!r}; only 'sine:a,b,h' is available")
    parts = [p.strip() for p in rest.split(",")] if rest else []
    if len(parts) != 3:
        raise ProfileError("builtin sine expects three numbers: sine:a,b,h")
    vals = []
    for p in parts:
        try:
            vals.append(float(p[:-2]) * math.pi if p.endswith("pi") else float(p))
        except ValueError:
            raise ProfileError(f"bad number {p!r} in builtin string") from None
    return ShearProfile.sine(vals[0], vals[1], vals[2], DEFAULT_G if g is None else g)


# -- inflection structure ------------------------------------------------------

@dataclass(frozen=True)
class InflectionData:
    points: tuple          # y_j in (0, h), increasing
    point_values: tuple    # U(y_j)
    slopes: tuple          # U'(y_j)
    values: tuple          # distinct inflection values
    nonsimple: tuple       # per point: U'' and U''' both vanish there
    degenerate_linear: bool = False
    touch_points: tuple = ()

    def points_of(self, value: float, tol: float) -> list[int]:
        return [i for i, v in enumerate(self.point_values) if abs(v - value) <= tol]


def tol_value(profile: ShearProfile) -> float:
    return 1e-8 * max(profile.du, 1e-300)


def find_inflections(profile: ShearProfile, n_scan: int = 1024) -> InflectionData:
    """All sign changes of U'' in (0, h), refined by bisection."""
    if n_scan < 64:
        raise ValueError("n_scan must be >= 64")
    if profile.linear:
        return InflectionData((), (), (), (), (), degenerate_linear=True)
    h = profile.h
    f = lambda t: _real(profile.Upp(t))
    y = np.linspace(0.0, h, n_scan + 1)
    s = np.real(profile.Upp(y))
    tol_root = 1e-10 * profile.max_abs_upp
    zero = np.abs(s) <= tol_root
    pts, touches = [], []
    i = 1
    while i < y.size - 1:
        if zero[i]:
            # run of near-zero samples; classify by the signs on either side
            j = i
            while j + 1 < y.size - 1 and zero[j + 1]:
                j += 1
            left, right = s[i - 1], s[j + 1]
            mid = 0.5 * (y[i] + y[j])
            if left * right < 0 and not zero[i - 1] and not zero[j + 1]:
                r = brentq(f, y[i - 1], y[j + 1], xtol=1e-15 * h, rtol=4 * np.finfo(float).eps) \
                    if i == j else mid
                pts.append(r)
            else:
                touches.append(mid)
            i = j + 1
            continue
        i += 1
    for i in range(y.size - 1):
        if not zero[i] and not zero[i + 1] and s[i] * s[i + 1] < 0:
            pts.append(brentq(f, y[i], y[i + 1], xtol=1e-15 * h, rtol=4 * np.finfo(float).eps))
    pts = sorted(p for p in pts if 0.0 < p < h)
    dedup = []
    for p in pts:
        if not dedup or p - dedup[-1] > 1e-12 * h:
            dedup.append(p)
    pts = dedup
    vals = [_real(profile.U(p)) for p in pts]
    slopes = [_real(profile.Up(p)) for p in pts]
    nonsimple = []
    u3_scale = profile.max_abs_upp / h
    for p in pts:
        nonsimple.append(bool(abs(_real(profile.Uppp(p))) <= 1e-6 * u3_scale))
    tv = tol_value(profile)
    distinct = []
    for v in sorted(vals):
        if not distinct or v - distinct[-1] > tv:
            distinct.append(v)
    return InflectionData(tuple(pts), tuple(vals), tuple(slopes), tuple(distinct),
                          tuple(nonsimple), False, tuple(touches))


# -- K_j(y) ------------------------------------------------------------------------

def level_set(profile: ShearProfile, c: float, n_scan: int = 4096) -> list[float]:
    """Points y in [0, h] with U(y) = c (sign changes plus exact sample hits)."""
    h = profile.h
    y = np.linspace(0.0, h, n_scan + 1)
    r = np.real(profile.U(y)) - c
    tol = 1e-14 * max(profile.du, abs(c), 1e-300)
    out = []
    for i in range(y.size):
        if abs(r[i]) <= tol:
            out.append(float(y[i]))
    for i in range(y.size - 1):
        if abs(r[i]) > tol and abs(r[i + 1]) > tol and r[i] * r[i + 1] < 0:
            out.append(brentq(lambda t: _real(profile.U(t)) - c, y[i], y[i + 1],
                              xtol=1e-15 * h, rtol=4 * np.finfo(float).eps))
    out.sort()
    res = []
    for p in out:
        if not res or p - res[-1] > 1e-12 * h:
            res.append(p)
    return res


class KFunction:
    """K_j(y) = -U''(y)/(U(y) - U_j) with removable singularities filled in.

    Construction checks every point of the level set {U = U_j}: where U'' does
    not vanish there the singularity is not removable and UnboundedK is raised.
    """

    def __init__(self, profile: ShearProfile, value: float, extra_roots: Sequence[float] = ()):
        self.profile = profile
        self.value = float(value)
        h = profile.h
        roots = sorted(set(level_set(profile, value)) | set(float(r) for r in extra_roots))
        tol_upp = 1e-8 * profile.max_abs_upp
        limits = []
        for r in roots:
            upp = abs(_real(profile.Upp(r)))
            if upp > tol_upp:
                raise UnboundedK(f"K for value {value:.17g} is unbounded at y={r:.17g} "
                                 f"(U=U_j but U''={upp:.3g})")
            up = _real(profile.Up(r))
            if abs(up) <= 1e-8 * max(profile.max_abs_up, 1e-300):
                raise NonSimpleRoot(f"U - U_j has a non-simple root at y={r:.17g} (U'={up:.3g})")
            limits.append(-_real(profile.Uppp(r)) / up)
        self.roots = tuple(roots)
        self.limits = tuple(limits)
        self._window = 1e-7 * h

    def __call__(self, y):
        y0 = np.asarray(y, float)
        y = np.atleast_1d(y0)
        p = self.profile
        num = -np.real(p.Upp(y))
        den = np.real(p.U(y)) - self.value
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.array(num / den, float)
        for r, lim in zip(self.roots, self.limits):
            k[np.abs(y - r) < self._window] = lim
        bad = ~np.isfinite(k)
        if np.any(bad):
            # exact zero of the denominator away from listed roots: use the limit formula
            k[bad] = -np.real(p.Uppp(y[bad])) / np.real(p.Up(y[bad]))
        return k.reshape(y0.shape) if y0.ndim else float(k[0])


def evaluate_K(profile: ShearProfile, inflection_value: float, y):
    """K_j(y) = -U''/(U - U_j); removable singularities use -U'''/U'."""
    return KFunction(profile, inflection_value)(y)


# -- classification ----------------------------------------------------------

@dataclass(frozen=True)
class FlowClass:
    is_Kplus: bool
    is_F: bool
    is_Fplus: bool
    is_monotone: bool
    has_inflection: bool
    K_sign_per_value: dict
    notes: tuple = ()


def classify(profile: ShearProfile, infl: InflectionData | None = None,
             n_grid: int = 2001, n_levels: int = 257) -> FlowClass:
    """Grid-verified class membership (K+, F, F+), monotonicity."""
    if infl is None:
        infl = find_inflections(profile)
    notes = []
    h = profile.h
    y = np.linspace(0.0, h, n_grid)
    up = np.real(profile.Up(y))
    tol_up = 1e-12 * max(profile.max_abs_up, 1e-300)
    is_monotone = bool(np.all(up >= -tol_up) or np.all(up <= tol_up))
    has_infl = len(infl.points) > 0
    if infl.degenerate_linear:
        notes.append("degenerate-linear: U'' vanishes identically")
    if infl.touch_points:
        notes.append("U'' touches zero without changing sign at y=" +
                     ",".join(f"{t:.6g}" for t in infl.touch_points))
    if any(infl.nonsimple):
        notes.append("non-simple inflection point (U'' and U''' both vanish)")
    if not has_infl:
        return FlowClass(False, True, False, is_monotone, False, {}, tuple(notes))

    tv = tol_value(profile)
    # class F: U'' one-signed on every non-inflection level set
    is_F = True
    if not is_monotone:
        tol_root = 1e-10 * profile.max_abs_upp
        levels = profile.u_min + profile.du * (np.arange(1, n_levels + 1) / (n_levels + 1))
        for c in levels:
            if any(abs(c - v) <= 100 * tv for v in infl.values):
                continue
            sg = set()
            for r in level_set(profile, float(c), n_scan=n_grid):
                s = _real(profile.Upp(r))
                if abs(s) > tol_root:
                    sg.add(s > 0)
            if len(sg) > 1:
                is_F = False
                notes.append(f"class F fails on level U={c:.6g}")
                break

    signs = {}
    for v in infl.values:
        idx = infl.points_of(v, tv)
        ks = []
        for i in idx:
            yj, sl = infl.points[i], infl.slopes[i]
            if abs(sl) <= 1e-8 * max(profile.max_abs_up, 1e-300):
                ks.append(0.0)
            else:
                ks.append(-_real(profile.Uppp(yj)) / sl)
        sgn = {int(np.sign(k)) for k in ks}
        signs[v] = sgn.pop() if len(sgn) == 1 else 0
    is_Fplus = is_F and all(s != 0 for s in signs.values())

    is_Kplus = False
    if len(infl.values) == 1:
        try:
            kf = KFunction(profile, infl.values[0], extra_roots=infl.points)
            kv = kf(np.linspace(0.0, h, 4 * n_grid + 1))
            is_Kplus = bool(np.all(np.isfinite(kv)) and np.min(kv) > 0.0)
            if not is_Kplus:
                notes.append("K is not strictly positive on [0,h]")
        except (UnboundedK, NonSimpleRoot) as exc:
            notes.append(str(exc))
    return FlowClass(is_Kplus, is_F, is_Fplus, is_monotone, True, signs, tuple(notes))
