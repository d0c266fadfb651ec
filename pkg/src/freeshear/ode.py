"""Fourth-order integration of phi'' = q(y) phi on [0, h].

One marching kernel serves every caller.  It steps a batch of independent
columns (one per wave speed c, or per trial eigenvalue) with the classical
RK4 scheme along a parameterized path y(s).  Three path types are used:

* a cos-graded real grid x(s) = h(1 - cos(pi s))/2 (dense near both ends);
* the same grid pushed into the complex y-plane (analytic profiles only),
  ``y = x - i*sign*d*tanh(U'(x)/u0)*sin(pi x/h)``.  Along that curve
  ``sign*Im U(y) <= 0``, so for ``sign*Im c > 0`` the coefficient
  U''/(U - c) never blows up and, by Cauchy's theorem, the endpoint values
  equal those obtained along the real axis.  For c just below the real axis
  the same curve yields the analytic continuation from the upper half plane;
* arbitrary increasing real nodes (steps are the node gaps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CriticalLayer
from .profile import ShearProfile

DEFAULT_N = 2001
_BIG = 1e150


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples of a solution (and its y-derivative) at ``nodes`` in [0, h].

    ``points`` holds the complex path coordinates when the samples were taken
    along a deformed path (None: the samples sit on the real nodes).
    ``accuracy`` is the relative change of the far-endpoint data under step
    halving when it was measured (nan otherwise).
    """

    nodes: np.ndarray
    values: np.ndarray
    deriv_values: np.ndarray
    points: np.ndarray | None = None
    accuracy: float = math.nan

    def __post_init__(self):
        n = self.nodes
        if n.ndim != 1 or n.size < 2:
            raise ValueError("GridFunction needs at least two nodes")
        if self.values.shape != n.shape or self.deriv_values.shape != n.shape:
            raise ValueError("values and deriv_values must match nodes")
        if np.any(np.diff(n) <= 0) or n[0] != 0.0:
            raise ValueError("nodes must start at 0 and increase strictly")

    @property
    def h(self) -> float:
        return float(self.nodes[-1])

    def scaled(self, a) -> "GridFunction":
        return GridFunction(self.nodes, a * self.values, a * self.deriv_values, self.points,
                            self.accuracy)


@dataclass(frozen=True, eq=False)
class FundamentalPair:
    phi1: GridFunction
    phi2: GridFunction
    normalized_at: str
    wronskian_residual: float


@dataclass(frozen=True, eq=False)
class Path:
    """Fine samples (nodes and step midpoints) of a parameterized path."""

    s: np.ndarray        # fine parameter values, length 2N-1
    x: np.ndarray        # real node coordinate
    y: np.ndarray        # path points (complex when deformed)
    dyds: np.ndarray     # dy/ds at the fine samples
    sign: int            # +1 / -1 deformed below / above the real axis, 0 real

    @property
    def n_nodes(self) -> int:
        return (self.s.size + 1) // 2

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.s[::2])

    @property
    def node_x(self) -> np.ndarray:
        return self.x[::2]

    @property
    def node_y(self) -> np.ndarray:
        return self.y[::2]


def tol_crit(profile: ShearProfile) -> float:
    return 1e-8 * max(profile.du, 1e-300)


def path_depth(profile: ShearProfile) -> float:
    """Maximal excursion of the deformed path away from the real axis."""
    d = 0.06 * profile.h
    if profile.max_abs_upp > 0:
        d = min(d, 0.2 * profile.max_abs_up / profile.max_abs_upp)
    return d


def make_path(profile: ShearProfile, N: int = DEFAULT_N, sign: int = 0,
              grid: str = "graded") -> Path:
    """Path for RK4 with N nodes.  ``sign`` selects the complex deformation."""
    if N < 3:
        raise ValueError("N must be >= 3")
    h = profile.h
    s = np.linspace(0.0, 1.0, 2 * N - 1)
    if grid == "graded":
        x = h * (1.0 - np.cos(np.pi * s)) / 2.0
        dx = h * np.pi * np.sin(np.pi * s) / 2.0
        x[0], x[-1] = 0.0, h
    elif grid == "uniform":
        x = h * s
        dx = np.full_like(s, h)
    else:
        raise ValueError(f"unknown grid kind {grid!r}")
    if sign == 0 or not profile.analytic or profile.linear or profile.max_abs_up == 0:
        return Path(s, x, x.astype(complex), dx.astype(complex), 0)
    u0 = 0.1 * profile.max_abs_up
    d = path_depth(profile)
    upx = np.real(profile.Up(x))
    uppx = np.real(profile.Upp(x))
    for _ in range(6):
        T = np.tanh(upx / u0)
        S = np.sin(np.pi * x / h)
        dS = (np.pi / h) * np.cos(np.pi * x / h)
        y = x - 1j * sign * d * T * S
        dydx = 1.0 - 1j * sign * d * ((1.0 - T * T) * uppx / u0 * S + T * dS)
        # the deformation must keep sign*Im U <= 0 (first-order argument)
        imu = sign * np.imag(profile.U(y))
        if np.all(imu <= 1e-13 * max(profile.du, 1e-300)):
            y[0], y[-1] = 0.0, h
            return Path(s, x, y, dydx * dx, int(sign))
        d *= 0.5
    return Path(s, x, x.astype(complex), dx.astype(complex), 0)


def rayleigh_coefficients(profile: ShearProfile, alpha: float, c: np.ndarray, path: Path,
                          deriv: bool = False, check: bool = True):
    """q = alpha^2 + U''/(U - c) (and dq/dc = U''/(U-c)^2) times dy/ds."""
    y = path.y
    u = profile.U(y)[:, None]
    upp = profile.Upp(y)[:, None]
    den = u - c[None, :]
    if check and not profile.linear:
        m = np.min(np.abs(den), axis=0)
        bad = m < tol_crit(profile)
        if np.any(bad):
            cb = c[bad][0]
            raise CriticalLayer(f"critical layer: |U(y) - c| = {m[bad][0]:.3g} on the "
                                f"integration path for c = {cb:.17g}")
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(upp == 0, 0.0, upp / den)
        q = (alpha * alpha + coef) * path.dyds[:, None]
        r = np.where(upp == 0, 0.0, coef / den) * path.dyds[:, None] if deriv else None
    return q, r


def march(H, Yp, QY, p0, w0, RY=None, pc0=None, wc0=None, backward=False, store=False,
          renorm=False):
    """Classical RK4 for p' = w*Yp, w' = QY*p (+ the variational pair).

    Fine arrays have length 2N-1 (node, midpoint, node, ...); ``H`` holds the
    N-1 parameter steps.  State arrays broadcast against QY[k] (columns).
    Returns the end state, and when ``store`` the node samples (N, ...).
    With ``renorm`` the columns are rescaled when they grow past 1e150 and
    the accumulated log-scale is returned alongside.
    """
    n = H.size + 1
    p, w = np.array(p0, dtype=complex), np.array(w0, dtype=complex)
    var = RY is not None
    if var:
        pc, wc = np.array(pc0, dtype=complex), np.array(wc0, dtype=complex)
    order = range(n - 1, 0, -1) if backward else range(n - 1)
    if store:
        P = np.empty((n,) + p.shape, complex)
        W = np.empty((n,) + p.shape, complex)
        L = np.zeros((n,) + p.shape[-1:], float) if renorm else None
        first = n - 1 if backward else 0
        P[first], W[first] = p, w
    logscale = np.zeros(p.shape[-1:], float)
    for i in order:
        if backward:
            a, b, c, ds, nxt = 2 * i, 2 * i - 1, 2 * i - 2, -H[i - 1], i - 1
        else:
            a, b, c, ds, nxt = 2 * i, 2 * i + 1, 2 * i + 2, H[i], i + 1
        ya, yb, yc = Yp[a], Yp[b], Yp[c]
        qa, qb, qc = QY[a], QY[b], QY[c]
        hd = 0.5 * ds
        k1p = w * ya
        k1w = qa * p
        p2, w2 = p + hd * k1p, w + hd * k1w
        k2p = w2 * yb
        k2w = qb * p2
        p3, w3 = p + hd * k2p, w + hd * k2w
        k3p = w3 * yb
        k3w = qb * p3
        p4, w4 = p + ds * k3p, w + ds * k3w
        k4p = w4 * yc
        k4w = qc * p4
        if var:
            ra, rb, rc = RY[a], RY[b], RY[c]
            l1p = wc * ya
            l1w = qa * pc + ra * p
            pc2, wc2 = pc + hd * l1p, wc + hd * l1w
            l2p = wc2 * yb
            l2w = qb * pc2 + rb * p2
            pc3, wc3 = pc + hd * l2p, wc + hd * l2w
            l3p = wc3 * yb
            l3w = qb * pc3 + rb * p3
            pc4, wc4 = pc + ds * l3p, wc + ds * l3w
            l4p = wc4 * yc
            l4w = qc * pc4 + rc * p4
            pc = pc + (ds / 6.0) * (l1p + 2 * l2p + 2 * l3p + l4p)
            wc = wc + (ds / 6.0) * (l1w + 2 * l2w + 2 * l3w + l4w)
        p = p + (ds / 6.0) * (k1p + 2 * k2p + 2 * k3p + k4p)
        w = w + (ds / 6.0) * (k1w + 2 * k2w + 2 * k3w + k4w)
        if renorm:
            big = np.maximum(np.abs(p), np.abs(w))
            if big.ndim > 1:
                big = big.max(axis=0)
            if np.any(big > _BIG):
                f = np.where(big > _BIG, big, 1.0)
                p, w = p / f, w / f
                logscale = logscale + np.log(f)
        if store:
            P[nxt], W[nxt] = p, w
            if renorm:
                L[nxt] = logscale
    out = {"p": p, "w": w, "logscale": logscale}
    if var:
        out["pc"], out["wc"] = pc, wc
    if store:
        out["P"], out["W"] = P, W
        if renorm:
            out["L"] = L
    return out


def _batch(c):
    return np.atleast_1d(np.asarray(c, dtype=complex)).ravel()


def choose_sign(profile: ShearProfile, c: complex, branch: str = "auto") -> int:
    """Path deformation for a single c (see module docstring)."""
    if branch == "upper":
        return 1
    if branch == "real":
        return 0
    if c.imag > 0:
        return 1
    if c.imag < 0:
        return -1
    return 0


def _step_matrices(H, Yp, Q, R=None, backward=True):
    """RK4 step matrices of the march, in application order."""
    n = H.size + 1
    M = Q.shape[1]
    d = 2 if R is None else 4

    def A(idx):
        out = np.zeros((idx.size, M, d, d), complex)
        out[:, :, 0, 1] = Yp[idx][:, None]
        out[:, :, 1, 0] = Q[idx]
        if R is not None:
            out[:, :, 2, 3] = Yp[idx][:, None]
            out[:, :, 3, 2] = Q[idx]
            out[:, :, 3, 0] = R[idx]
        return out

    if backward:
        i = np.arange(n - 1, 0, -1)
        ds = -H[i - 1]
        A1, A2, A4 = A(2 * i), A(2 * i - 1), A(2 * i - 2)
    else:
        i = np.arange(n - 1)
        ds = H[i]
        A1, A2, A4 = A(2 * i), A(2 * i + 1), A(2 * i + 2)
    eye = np.eye(d)
    hd = (0.5 * ds)[:, None, None, None]
    ds = ds[:, None, None, None]
    K2 = A2 @ (eye + hd * A1)
    K3 = A2 @ (eye + hd * K2)
    K4 = A4 @ (eye + ds * K3)
    return eye + ds / 6.0 * (A1 + 2.0 * K2 + 2.0 * K3 + K4)


def _tree_product(S):
    while S.shape[0] > 1:
        if S.shape[0] % 2:
            pad = np.broadcast_to(np.eye(S.shape[-1], dtype=complex), (1,) + S.shape[1:])
            S = np.concatenate([S, pad])
        S = S[1::2] @ S[0::2]
    return S[0]


def _prefix_product(S):
    """T[k] = S[k] ... S[0] by a doubling scan."""
    T = S.copy()
    off = 1
    while off < T.shape[0]:
        T[off:] = T[off:] @ T[:-off]
        off *= 2
    return T


def _transfer_bottom(path, q, r):
    """Same RK4 scheme as march, as a product of step matrices (fast for few c)."""
    T = _tree_product(_step_matrices(path.steps, path.dyds, q, r))
    res = {"phi1": T[:, 0, 0], "phi2": T[:, 0, 1], "dphi1": T[:, 1, 0], "dphi2": T[:, 1, 1]}
    if r is not None:
        res["chi1"], res["chi2"] = T[:, 2, 0], T[:, 2, 1]
    return res


def top_pair_at_bottom(profile: ShearProfile, alpha: float, c, N: int = DEFAULT_N,
                       deriv: bool = False, sign: int = 1, path: Path | None = None):
    """phi1(0), phi2(0) (and d/dc) of the top-normalized pair for a batch of c.

    All c share one path; with ``sign=+1`` this is the continuation from the
    upper half plane.
    """
    c = _batch(c)
    if path is None:
        path = make_path(profile, N, sign)
    q, r = rayleigh_coefficients(profile, alpha, c, path, deriv=deriv)
    M = c.size
    if M <= 8:
        return _transfer_bottom(path, q, r)
    p0 = np.zeros((2, M), complex)
    w0 = np.zeros((2, M), complex)
    p0[0] = 1.0
    w0[1] = 1.0
    kw = {}
    if deriv:
        kw = {"RY": r[:, None, :], "pc0": np.zeros((2, M)), "wc0": np.zeros((2, M))}
    out = march(path.steps, path.dyds, q[:, None, :], p0, w0, backward=True, **kw)
    res = {"phi1": out["p"][0], "phi2": out["p"][1], "dphi1": out["w"][0], "dphi2": out["w"][1]}
    if deriv:
        res["chi1"], res["chi2"] = out["pc"][0], out["pc"][1]
    return res


def _integrate_once(profile, alpha, c, init, at, N, sign):
    path = make_path(profile, N, sign)
    cc = np.array([c], complex)
    q, _ = rayleigh_coefficients(profile, alpha, cc, path)
    back = at == "top"
    # same RK4 scheme as march, with the running products formed by a scan
    T = _prefix_product(_step_matrices(path.steps, path.dyds, q, backward=back)[:, 0])
    x0 = np.array(init, complex)
    st = np.concatenate([x0[None], T @ x0])
    if back:
        st = st[::-1]
    vals, ders = st[:, 0], st[:, 1]
    pts = path.node_y if path.sign != 0 else None
    return path.node_x.copy(), vals, ders, pts


def integrate_rayleigh(profile: ShearProfile, alpha: float, c: complex, init=(0.0, 1.0),
                       at: str = "bottom", N: int = DEFAULT_N, branch: str = "auto",
                       certify: bool = True) -> GridFunction:
    """Solve phi'' - alpha^2 phi - U''/(U-c) phi = 0 from data at one endpoint.

    ``init`` is (phi, phi') at the endpoint ``at`` ('bottom' y=0 or 'top' y=h).
    With ``certify`` the far-endpoint data are recomputed with half the step;
    the relative change is stored in ``accuracy``.
    """
    if N < 201:
        raise ValueError("N must be >= 201")
    if at not in ("bottom", "top"):
        raise ValueError("at must be 'bottom' or 'top'")
    c = complex(c)
    sign = choose_sign(profile, c, branch)
    if sign == 0 and c.imag == 0 and not profile.linear:
        if profile.u_min - tol_crit(profile) <= c.real <= profile.u_max + tol_crit(profile):
            raise CriticalLayer(f"c = {c.real:.17g} lies in the range of U")
    x, v, dv, pts = _integrate_once(profile, alpha, c, init, at, N, sign)
    acc = math.nan
    if certify:
        _, v2, dv2, _ = _integrate_once(profile, alpha, c, init, at, 2 * N - 1, sign)
        k = 0 if at == "top" else -1
        k2 = 0 if at == "top" else -1
        ref = max(abs(v2[k2]), abs(dv2[k2]), 1e-300)
        acc = max(abs(v[k] - v2[k2]), abs(dv[k] - dv2[k2])) / ref
    return GridFunction(x, v, dv, pts, acc)


def fundamental_pair(profile: ShearProfile, alpha: float, c: complex, N: int = DEFAULT_N,
                     branch: str = "auto") -> FundamentalPair:
    """Top-normalized pair: phi1(h)=1, phi1'(h)=0, phi2(h)=0, phi2'(h)=1."""
    f1 = integrate_rayleigh(profile, alpha, c, (1.0, 0.0), "top", N, branch, certify=False)
    f2 = integrate_rayleigh(profile, alpha, c, (0.0, 1.0), "top", N, branch, certify=False)
    wr = f1.values * f2.deriv_values - f2.values * f1.deriv_values
    return FundamentalPair(f1, f2, "top", float(np.max(np.abs(wr - 1.0))))


# -- real nonuniform grids ---------------------------------------------------------

def graded_nodes(h: float, N: int, clusters=(), ratio: float = 1.05) -> np.ndarray:
    """Nodes on [0, h] whose spacing never exceeds h/(N-1) and shrinks
    geometrically (factor ``ratio``) towards each cluster (y_j, dmin_j)."""
    base = h / (N - 1)
    cl = [(float(yc), float(dm)) for yc, dm in clusters if dm < base]
    if not cl:
        return np.linspace(0.0, h, N)
    yc = np.array([c[0] for c in cl])
    dm = np.array([c[1] for c in cl])
    out = [0.0]
    y = 0.0
    g = ratio - 1.0
    while True:
        step = min(base, float(np.min(dm + g * np.abs(y - yc))))
        y_new = y + step
        if y_new >= h - 0.5 * step:
            if h - y > step:
                # split the tail in two rather than overshoot the spacing bound
                out.append(0.5 * (y + h))
            out.append(h)
            break
        out.append(y_new)
        y = y_new
    return np.asarray(out)


def march_nodes(nodes: np.ndarray, qfun, p0, w0, backward=False, rfun=None, pc0=None,
                wc0=None, store=True, renorm=False):
    """RK4 on arbitrary increasing real nodes; qfun(y) -> (len(y), M) coefficients."""
    nodes = np.asarray(nodes, float)
    fine = np.empty(2 * nodes.size - 1)
    fine[::2] = nodes
    fine[1::2] = 0.5 * (nodes[:-1] + nodes[1:])
    Q = qfun(fine)
    R = rfun(fine) if rfun is not None else None
    ones = np.ones(fine.size)
    return march(np.diff(nodes), ones, Q, p0, w0, RY=R, pc0=pc0, wc0=wc0, backward=backward,
                 store=store, renorm=renorm)


def rk4_propagator(nodes: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Propagator of z' = A(y) z across increasing real nodes by classical RK4.

    ``A`` has shape (2n-1, d, d): samples at nodes and midpoints interleaved.
    """
    nodes = np.asarray(nodes, float)
    A = np.asarray(A)
    H = np.diff(nodes)[:, None, None]
    eye = np.eye(A.shape[-1])
    A1, A2, A4 = A[0:-1:2], A[1::2], A[2::2]
    K2 = A2 @ (eye + 0.5 * H * A1)
    K3 = A2 @ (eye + 0.5 * H * K2)
    K4 = A4 @ (eye + H * K3)
    S = eye + H / 6.0 * (A1 + 2.0 * K2 + 2.0 * K3 + K4)
    return _tree_product(S[:, None])[0]


def interleave(nodes: np.ndarray) -> np.ndarray:
    """Nodes and midpoints, as used by the RK4 marches."""
    fine = np.empty(2 * nodes.size - 1)
    fine[::2] = nodes
    fine[1::2] = 0.5 * (nodes[:-1] + nodes[1:])
    return fine
