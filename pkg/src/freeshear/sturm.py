"""Lowest eigenvalues of -d^2/dy^2 - K(y) on (0, h) with phi(0) = 0.

Top conditions: free surface phi'(h) = beta phi(h) with beta = g_r(U_s),
Dirichlet phi(h) = 0, Neumann phi'(h) = 0.  Eigenvalues are found by shooting
from (phi, phi')(0) = (0, 1) and counting with the Pruefer angle
theta = atan2(phi, phi'), which is increasing in lambda and crosses multiples
of pi only upwards.  The n-th eigenvalue solves theta(h; lambda) = theta_bc + n pi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import ode
from .errors import InputError, NumericalError
from .profile import KFunction, ShearProfile, find_inflections

FREE_SURFACE = "free_surface"
DIRICHLET = "dirichlet"
NEUMANN_TOP = "neumann_top"
TAGS = (FREE_SURFACE, DIRICHLET, NEUMANN_TOP)

MAX_STEP_PHASE = 0.02


def tol_switch(profile: ShearProfile) -> float:
    return 1e-8 * max(profile.du, 1e-300)


@dataclass(frozen=True)
class BCVariant:
    tag: str
    robin_coeff: float | None = None
    note: str = ""

    def __post_init__(self):
        if self.tag not in TAGS:
            raise InputError(f"unknown boundary condition {self.tag!r}")
        if self.tag == FREE_SURFACE and (self.robin_coeff is None or not math.isfinite(self.robin_coeff)):
            raise InputError("free_surface needs a finite robin_coeff")

    @classmethod
    def free_surface(cls, profile: ShearProfile, value: float) -> "BCVariant":
        """beta = g_r(U_s); degrades to Dirichlet when U(h) = U_s."""
        d = profile.Uh - value
        if abs(d) < tol_switch(profile):
            return cls(DIRICHLET, None, "U(h) equals the inflection value: Dirichlet top condition")
        return cls(FREE_SURFACE, profile.g / d ** 2 + profile.Uph / d)

    @property
    def theta(self) -> float:
        """Pruefer angle of the top condition in (0, pi]."""
        if self.tag == DIRICHLET:
            return math.pi
        if self.tag == NEUMANN_TOP:
            return 0.5 * math.pi
        return math.atan2(1.0, self.robin_coeff)


@dataclass(frozen=True, eq=False)
class SturmResult:
    variant: BCVariant
    lambda0: float
    alpha: float
    eigenfunction: ode.GridFunction
    node_count: int
    rayleigh_quotient_residual: float
    problem: "SturmProblem" = field(repr=False, default=None)


def _as_callable(K, h: float) -> Callable:
    if callable(K):
        return K
    k = np.asarray(K, float)
    if k.ndim != 1 or k.size < 4:
        raise InputError("K samples must be a 1-D array of at least 4 values")
    return CubicSpline(np.linspace(0.0, h, k.size), k)


class SturmProblem:
    """-phi'' - K phi = lambda phi, phi(0) = 0, top condition from ``variant``."""

    def __init__(self, K, h: float, variant: BCVariant, N: int = ode.DEFAULT_N):
        if N < 201:
            raise InputError("N must be >= 201")
        self.h = float(h)
        self.K = _as_callable(K, self.h)
        self.variant = variant
        self.N = int(N)
        grid = np.linspace(0.0, self.h, 4001)
        kg = np.asarray(self.K(grid), float)
        if not np.all(np.isfinite(kg)):
            raise NumericalError("K is not finite on [0, h]")
        self.max_K = float(np.max(kg))
        self.max_abs_K = float(np.max(np.abs(kg)))
        self._cache = {}

    def _n_nodes(self, lam_abs: float) -> int:
        need = self.h * math.sqrt(lam_abs + self.max_abs_K) / MAX_STEP_PHASE + 1
        n = max(self.N, int(math.ceil(need)))
        return n + (n + 1) % 2  # odd, for Simpson

    def _K_fine(self, n):
        if n not in self._cache:
            nodes = np.linspace(0.0, self.h, n)
            fine = np.empty(2 * n - 1)
            fine[::2] = nodes
            fine[1::2] = 0.5 * (nodes[:-1] + nodes[1:])
            self._cache[n] = (nodes, fine, np.asarray(self.K(fine), float))
        return self._cache[n]

    def shoot(self, lams, n: int | None = None):
        lams = np.atleast_1d(np.asarray(lams, float))
        if n is None:
            n = self._n_nodes(float(np.max(np.abs(lams))))
        nodes, fine, kf = self._K_fine(n)
        Q = -(kf[:, None] + lams[None, :])
        M = lams.size
        if M <= 8:
            fast = self._shoot_scan(nodes, Q)
            if fast is not None:
                return fast
        out = ode.march(np.diff(nodes), np.ones(fine.size), Q, np.zeros(M), np.ones(M),
                        store=True, renorm=True)
        P, W = out["P"].real, out["W"].real
        theta = np.unwrap(np.arctan2(P, W), axis=0)
        # undo the running rescaling so columns are true solutions up to one factor
        f = np.exp(out["L"] - out["L"][-1])
        return nodes, P * f, W * f, theta

    @staticmethod
    def _shoot_scan(nodes, Q):
        """Same RK4 scheme by step-matrix prefix products; None on overflow."""
        fine_ones = np.ones(2 * nodes.size - 1)
        with np.errstate(over="ignore", invalid="ignore"):
            T = ode._prefix_product(ode._step_matrices(np.diff(nodes), fine_ones, Q.astype(complex),
                                                       backward=False))
            P = np.concatenate([np.zeros((1, Q.shape[1])), T[:, :, 0, 1].real])
            W = np.concatenate([np.ones((1, Q.shape[1])), T[:, :, 1, 1].real])
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(W))):
            return None
        theta = np.unwrap(np.arctan2(P, W), axis=0)
        return nodes, P, W, theta

    def theta_h(self, lam: float) -> float:
        return float(self.shoot([lam])[3][-1, 0])

    def eigenvalue(self, n: int = 0) -> float:
        """n-th eigenvalue (n = 0 lowest)."""
        target = self.variant.theta + n * math.pi

        def F(lam):
            return self.theta_h(lam) - target

        lo = -self.max_K - 1.0
        for _ in range(80):
            if F(lo) < 0:
                break
            lo = 2.0 * lo - 1.0
        else:
            raise NumericalError("could not bracket the eigenvalue from below")
        hi = max(self.max_K, 0.0) + 1.0
        for _ in range(80):
            if F(hi) > 0:
                break
            hi = 2.0 * hi + 1.0
        else:
            raise NumericalError("could not bracket the eigenvalue from above")
        return float(brentq(F, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200))

    def negative_count(self) -> int:
        th0 = self.theta_h(0.0)
        n = 0
        while self.variant.theta + n * math.pi < th0 - 1e-12:
            n += 1
        return n

    def eigenfunction(self, lam: float):
        nodes, P, W, _ = self.shoot([lam])
        v, dv = P[:, 0], W[:, 0]
        k = int(np.argmax(np.abs(v)))
        s = v[k]
        return nodes, v / s, dv / s

    def quotient(self, nodes, v, dv) -> float:
        """Rayleigh quotient with the boundary term of the top condition."""
        num = simpson(dv * dv - np.asarray(self.K(nodes), float) * v * v, x=nodes)
        if self.variant.tag == FREE_SURFACE:
            num -= self.variant.robin_coeff * v[-1] ** 2
        return float(num / simpson(v * v, x=nodes))

    def result(self, n: int = 0) -> SturmResult:
        lam = self.eigenvalue(n)
        nodes, v, dv = self.eigenfunction(lam)
        nodes_count = count_nodes(v)
        if self.variant.tag == DIRICHLET:
            v = v.copy()
            v[-1] = 0.0
        rq = abs(self.quotient(nodes, v, dv) - lam) / max(1.0, abs(lam))
        zero = zero_tol(self.max_abs_K)
        alpha = math.sqrt(-lam) if lam < -zero else 0.0
        gf = ode.GridFunction(nodes, v.astype(complex), dv.astype(complex))
        return SturmResult(self.variant, lam, alpha, gf, nodes_count, rq, self)


def zero_tol(max_abs_K: float) -> float:
    """Eigenvalues above -zero_tol count as nonnegative (marginal)."""
    return 1e-9 * max(1.0, max_abs_K)


def count_nodes(v) -> int:
    v = np.asarray(v, float)
    inner = v[1:-1]
    big = inner[np.abs(inner) > 1e-10 * np.max(np.abs(v))]
    return int(np.sum(np.signbit(big[1:]) != np.signbit(big[:-1])))


def lowest_eigenvalue(profile: ShearProfile, K, variant: BCVariant,
                      N: int = ode.DEFAULT_N) -> SturmResult:
    """Lowest eigenvalue -alpha^2 of -d^2/dy^2 - K; alpha = 0 when it is >= 0."""
    return SturmProblem(K, profile.h, variant, N).result(0)


def negative_eigenvalues(profile: ShearProfile, K, variant: BCVariant,
                         N: int = ode.DEFAULT_N) -> list:
    """All negative eigenvalues, ascending (marginal zero eigenvalues excluded)."""
    prob = SturmProblem(K, profile.h, variant, N)
    zero = zero_tol(prob.max_abs_K)
    out = []
    for n in range(prob.negative_count() + 1):
        lam = prob.eigenvalue(n)
        if lam >= -zero:
            break
        out.append(lam)
    return out


def variational_check(result: SturmResult, n_trials: int = 32, seed: int = 0) -> float:
    """Minimum Rayleigh quotient over random admissible sine-series trials."""
    prob = result.problem
    h = prob.h
    rng = np.random.default_rng(seed)
    y = np.linspace(0.0, h, 4001)
    modes = np.arange(1, 9)
    if prob.variant.tag == DIRICHLET:
        kk = modes * math.pi / h
    else:
        kk = (modes - 0.5) * math.pi / h
    S = np.sin(np.outer(y, kk))
    C = np.cos(np.outer(y, kk)) * kk
    best = math.inf
    for _ in range(n_trials):
        a = rng.normal(size=kk.size) / modes
        best = min(best, prob.quotient(y, S @ a, C @ a))
    return best


@dataclass(frozen=True)
class AlphaTriple:
    alpha_max: float
    alpha_d: float
    alpha_n: float
    value: float
    results: dict
    checks: dict
    notes: tuple = ()


def inflection_value(profile: ShearProfile) -> float:
    infl = find_inflections(profile)
    if infl.degenerate_linear or len(infl.values) != 1:
        raise InputError("alpha_triple needs exactly one inflection value")
    return float(infl.values[0])


def alpha_triple(profile: ShearProfile, N: int = ode.DEFAULT_N) -> AlphaTriple:
    """alpha_max (free surface), alpha_d (rigid lid), alpha_n (Neumann top)."""
    us = inflection_value(profile)
    K = KFunction(profile, us)
    fs = BCVariant.free_surface(profile, us)
    notes = [fs.note] if fs.note else []
    res = {
        "free_surface": lowest_eigenvalue(profile, K, fs, N),
        "dirichlet": lowest_eigenvalue(profile, K, BCVariant(DIRICHLET), N),
        "neumann_top": lowest_eigenvalue(profile, K, BCVariant(NEUMANN_TOP), N),
    }
    a_max, a_d, a_n = (res[k].alpha for k in ("free_surface", "dirichlet", "neumann_top"))
    checks = {}
    if abs(profile.Uh - us) >= tol_switch(profile):
        checks["alpha_max>alpha_d"] = bool(a_max > a_d or (a_max == a_d == 0.0))
    if profile.g + profile.Uph * (profile.Uh - us) > 0:
        checks["alpha_max>alpha_n"] = bool(a_max > a_n)
    for k, ok in checks.items():
        if not ok:
            notes.append(f"ordering check failed: {k}")
    return AlphaTriple(a_max, a_d, a_n, us, res, checks, tuple(notes))
