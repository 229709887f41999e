"""Explicit analytic objects and their numerical verification.

* heat trace gain of the half-line heat equation with Dirichlet data,
* the one-dimensional Fokker-Planck kernel and its conormal bound,
* the 2x2 parabolic symbol, its eigenvalue splitting and symmetrizer,
* the Hardy inequality on the half line ``z < 0``.

All 1-D quadratures are composite Clenshaw-Curtis (``composite_cc``) with the error
estimated by doubling the panel count.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.stats import qmc
from scipy.spatial.transform import Rotation

from .grid import cheb, clenshaw_curtis


class KernelDomainError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


class SymmetrizerSearchError(RuntimeError):
    pass


# ---- quadrature -------------------------------------------------------------------

_CC_CACHE: dict = {}


def _cc_rule(n):
    if n not in _CC_CACHE:
        _CC_CACHE[n] = (cheb(n)[1], clenshaw_curtis(n))
    return _CC_CACHE[n]


def cc_nodes(a: float, b: float, panels: int = 32, n: int = 16):
    """Nodes and weights of the composite rule (``panels`` panels of ``n + 1`` CC nodes)."""
    x, w = _cc_rule(n)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def composite_cc(fun: Callable, a: float, b: float, panels: int = 32, n: int = 16):
    """Integral of ``fun`` over ``[a, b]`` and a node-doubling error estimate."""
    x1, w1 = cc_nodes(a, b, panels, n)
    x2, w2 = cc_nodes(a, b, 2 * panels, n)
    i1 = np.sum(w1 * fun(x1))
    i2 = np.sum(w2 * fun(x2))
    return float(i2), float(abs(i2 - i1))


def halfline_cc(fun: Callable, panels: int = 64, n: int = 16):
    """Integral over ``(-inf, 0]`` through ``z = -s / (1 - s)``; ``fun`` must decay at infinity."""

    def mapped(s):
        out = np.zeros_like(s)
        m = s < 1.0
        sm = s[m]
        out[m] = fun(-sm / (1.0 - sm)) / (1.0 - sm) ** 2
        return out

    return composite_cc(mapped, 0.0, 1.0, panels, n)


# ---- heat trace gain ----------------------------------------------------------------

def heat_trace_gain(gamma, tau, xi, eps):
    """``R = (gamma + |tau|)^(1/2) ||f^||^2_{L^2_z} / (sqrt(eps) |f^b|^2)`` for the decaying solution.

    With ``f^(z) = exp(w z / sqrt(eps)) f^b`` and ``w = sqrt(gamma + i tau + eps xi^2)`` the
    integral is exact, ``||f^||^2 = sqrt(eps) |f^b|^2 / (2 Re w)``, so
    ``R = (gamma + |tau|)^(1/2) / (2 Re w)``.
    """
    gamma, tau, xi, eps = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (gamma, tau, xi, eps)))
    if np.any(gamma < 1):
        raise KernelDomainError("heat trace gain needs gamma >= 1")
    if np.any((eps <= 0) | (eps > 1)):
        raise KernelDomainError("eps must lie in (0, 1]")
    w = np.sqrt(gamma + 1j * tau + eps * xi**2)
    R = np.sqrt(gamma + np.abs(tau)) / (2.0 * w.real)
    if not np.all(R <= 1.0):
        raise AssertionError(f"heat trace gain exceeds 1 (max {R.max()})")
    return R if R.ndim else float(R)


def heat_trace_gain_quadrature(gamma, tau, xi, eps, panels=64):
    """Same ratio with the z-integral done numerically (independent check)."""
    w = np.sqrt(gamma + 1j * tau + eps * xi**2)
    val, err = halfline_cc(lambda z: np.abs(np.exp(w * z / np.sqrt(eps))) ** 2, panels)
    return math.sqrt(gamma + abs(tau)) * val / math.sqrt(eps), err


def heat_grid(n_per_axis: int = 10):
    """``n^4`` sample modes (gamma, tau, xi, eps) spread over several decades."""
    g = np.logspace(0, 3, n_per_axis)
    t = np.concatenate([-np.logspace(-2, 4, n_per_axis // 2), np.logspace(-2, 4, n_per_axis - n_per_axis // 2)])
    x = np.concatenate([[0.0], np.logspace(-2, 3, n_per_axis - 1)])
    e = np.logspace(-4, 0, n_per_axis)
    return [a.ravel() for a in np.meshgrid(g, t, x, e, indexing="ij")]


# ---- Fokker-Planck ------------------------------------------------------------------

def _odd(f0):
    def ext(z):
        z = np.asarray(z, dtype=float)
        return np.where(z <= 0, f0(np.minimum(z, 0.0)), -f0(-np.maximum(z, 0.0)))
    return ext


def _zdz_odd(f0, df0):
    """``z d_z`` of the odd extension (``z d_z`` preserves parity, so this is odd too)."""
    def ext(z):
        z = np.asarray(z, dtype=float)
        a = np.minimum(z, 0.0)
        b = -np.maximum(z, 0.0)
        return np.where(z <= 0, a * df0(a), -b * df0(b))
    return ext


def _numeric_derivative(f, h=1e-4):
    return lambda z: (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)


def _drift_integrals(gamma, t, tau):
    """``Gamma(t)`` and ``I = int_tau^t exp(2 (Gamma(t) - Gamma(s))) ds``."""
    if callable(gamma):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                G = lambda s: integrate.quad(gamma, tau, s, limit=200)[0]
                Gt = G(t)
                I = integrate.quad(lambda s: math.exp(2.0 * (Gt - G(s))), tau, t, limit=200)[0]
            except (integrate.IntegrationWarning, OverflowError, ZeroDivisionError) as exc:
                raise QuadratureError(f"drift is not integrable on [{tau}, {t}]: {exc}") from exc
    else:
        Gt = float(gamma) * (t - tau)
        I = (t - tau) if gamma == 0 else math.expm1(2.0 * Gt) / (2.0 * gamma)
    if not (math.isfinite(Gt) and math.isfinite(I)):
        raise QuadratureError("drift integral is not finite")
    return Gt, I


@dataclass
class FPResult:
    z: np.ndarray
    g: np.ndarray
    mass: float
    quad_error: float
    Gamma: float
    variance: float
    zdz_g: np.ndarray | None = None


def fp_kernel(x, eps, I):
    """Unit-mass Gaussian with variance ``2 eps I``."""
    s = 4.0 * eps * I
    return np.exp(-(x**2) / s) / math.sqrt(math.pi * s)


def fp_evolve(f0: Callable, gamma, eps: float, t: float, tau: float = 0.0, z=None,
              df0: Callable | None = None, panels: int = 24, n: int = 16, mass_tol: float = 1e-8,
              conormal: bool = False) -> FPResult:
    """Solve ``g_t + z gamma(t) g_z - eps g_zz = 0`` on R from the odd extension of ``f0``.

    ``f0`` is given on ``z <= 0`` with ``f0(0) = 0``.  The representation is
    ``g(t, z) = int k(z - z') f0~(exp(-Gamma) z') dz'``.  With ``conormal=True`` also
    returns ``z d_z g`` through the split ``z d_z k = (z - z') d_z k - z' d_z' k``
    followed by an integration by parts.
    """
    if abs(float(f0(np.array([0.0]))[0])) > 1e-12:
        raise KernelDomainError("f0(0) must vanish for the odd extension")
    if eps <= 0 or t < tau:
        raise KernelDomainError("need eps > 0 and t >= tau")
    z = np.linspace(-4.0, 0.0, 81) if z is None else np.asarray(z, dtype=float)
    Gt, I = _drift_integrals(gamma, t, tau)
    ft = _odd(f0)
    scale = math.exp(-Gt)
    if I <= 0:
        g = ft(z)
        zg = None
        if conormal:
            zg = _zdz_odd(f0, df0 or _numeric_derivative(f0))(z)
        return FPResult(z, g, 1.0, 0.0, Gt, 0.0, zg)
    sigma = math.sqrt(2.0 * eps * I)
    W = 12.0 * sigma
    x, w = cc_nodes(-W, W, panels, n)
    k = fp_kernel(x, eps, I)
    x2, w2 = cc_nodes(-W, W, 2 * panels, n)
    k2 = fp_kernel(x2, eps, I)
    mass = float(np.sum(w2 * k2))
    if abs(mass - 1.0) > mass_tol:
        raise QuadratureError(f"kernel mass {mass!r} deviates from 1 by more than {mass_tol}")
    arg = scale * (z[:, None] - x2[None, :])
    g = (ft(arg) * k2) @ w2
    g1 = (ft(scale * (z[:, None] - x[None, :])) * k) @ w
    err = float(np.abs(g - g1).max())
    zg = None
    if conormal:
        zf = _zdz_odd(f0, df0 or _numeric_derivative(f0))
        xk = -(x2**2) / (2.0 * eps * I) * k2  # x d_x k
        zg = (ft(arg) * xk) @ w2 + ((ft(arg) + zf(arg)) * k2) @ w2
    return FPResult(z, g, mass, err, Gt, 2.0 * eps * I, zg)


def fp_conormal_bound(f0: Callable, gamma, eps: float, t_grid, z=None, df0=None, tau: float = 0.0):
    """``max_t ||z d_z g(t)||_inf / (||f0||_inf + ||z d_z f0||_inf)`` and the per-time ratios."""
    z = np.linspace(-6.0, 0.0, 121) if z is None else np.asarray(z, dtype=float)
    d = df0 or _numeric_derivative(f0)
    zf = np.linspace(-40.0, 0.0, 8001)
    denom = np.abs(f0(zf)).max() + np.abs(zf * d(zf)).max()
    ratios = []
    for t in t_grid:
        r = fp_evolve(f0, gamma, eps, t, tau, z, df0=d, conormal=True)
        ratios.append(float(np.abs(r.zdz_g).max() / denom))
    return max(ratios), np.array(ratios)


# ---- symmetrizer --------------------------------------------------------------------

@dataclass(frozen=True)
class CompactSet:
    """Parameters of the admissible coefficient set: ``a0, a33 >= m``, ``|a| <= M``, ``a >= c0``."""

    m: float = 0.5
    M: float = 4.0
    c0: float = 0.25


@dataclass
class ParabolicSymbolPoint:
    a0: float
    a: np.ndarray
    gamma: float
    tau: float
    xi: np.ndarray

    def check(self, K: CompactSet, tol: float = 1e-9):
        lam = np.linalg.eigvalsh(self.a)
        ok = (self.a0 >= K.m - tol and self.a[2, 2] >= K.m - tol and lam[-1] <= K.M + tol
              and self.a0 <= K.M + tol and lam[0] >= K.c0 - tol and np.allclose(self.a, self.a.T))
        on_sphere = abs(self.gamma**2 + self.tau**2 + np.sum(self.xi**2) ** 2 - 1.0) < 1e-9
        if not (ok and on_sphere and self.gamma >= 0):
            raise KernelDomainError("point outside the compact admissible set")


def symbol_matrix(p: ParabolicSymbolPoint) -> np.ndarray:
    a = p.a
    a33 = a[2, 2]
    Ay = (p.xi @ a[:2, :2] @ p.xi) / a33
    Az = -2j * (a[:2, 2] @ p.xi) / a33
    return np.array([[0.0, 1.0], [p.a0 / a33 * (p.gamma + 1j * p.tau) + Ay, Az]], dtype=complex)


def symbol_eigs(p: ParabolicSymbolPoint):
    """Roots ``mu_+, mu_-`` of ``mu^2 - A_z mu - (a0/a33 (gamma + i tau) + A_y) = 0``, ``Re mu_+ >= Re mu_-``."""
    A = symbol_matrix(p)
    c = A[1, 0]
    b = A[1, 1]
    r = np.sqrt(b * b + 4.0 * c)
    mu = np.array([(b + r) / 2.0, (b - r) / 2.0])
    return mu[np.argsort(-mu.real)]


@dataclass
class SymmetrizerResult:
    mu_plus: complex
    mu_minus: complex
    P: np.ndarray
    S: np.ndarray
    kappa: float
    delta: float


def _eigvecs(mu):
    P = np.stack([np.array([1.0, m]) for m in mu], axis=1).astype(complex)
    return P / np.linalg.norm(P, axis=0)


def _gamma_star_gamma():
    G = np.zeros((2, 2))
    G[0, 0] = 1.0
    return G


def symmetrizer_margins(p: ParabolicSymbolPoint, delta: float):
    """Smallest eigenvalues of ``S A + (S A)^*`` and ``S + Gamma^* Gamma``; also returns S, P, mu."""
    mu = symbol_eigs(p)
    P = _eigvecs(mu)
    Pi = np.linalg.inv(P)
    S = Pi.conj().T @ np.diag([1.0, -delta]) @ Pi
    S = 0.5 * (S + S.conj().T)
    SA = S @ symbol_matrix(p)
    k1 = np.linalg.eigvalsh(SA + SA.conj().T)[0]
    k2 = np.linalg.eigvalsh(S + _gamma_star_gamma())[0]
    return float(k1), float(k2), S, P, mu


def default_delta_grid():
    return np.logspace(1, -6, 141)


def symmetrizer(p: ParabolicSymbolPoint, delta_grid=None, kappa_min: float = 1e-3, K: CompactSet | None = None):
    """Largest grid ``delta`` for which both symmetrizer inequalities hold with ``kappa >= kappa_min``."""
    if K is not None:
        p.check(K)
    mu = symbol_eigs(p)
    if not (mu[0].real > 0 > mu[1].real):
        raise SymmetrizerSearchError(f"eigenvalue on the imaginary axis: mu = {mu}")
    for delta in (default_delta_grid() if delta_grid is None else np.sort(delta_grid)[::-1]):
        k1, k2, S, P, mu = symmetrizer_margins(p, delta)
        if min(k1, k2) >= kappa_min:
            return SymmetrizerResult(mu[0], mu[1], P, S, min(k1, k2), float(delta))
    raise SymmetrizerSearchError("no admissible delta on the search grid")


def _sphere_point(u1, u2, u3):
    """Map ``[0,1)^3`` to ``(gamma, tau, xi)`` on ``gamma^2 + tau^2 + |xi|^4 = 1``, ``gamma >= 0``."""
    # (gamma, tau, |xi|^2) on the unit 2-sphere with gamma >= 0 and |xi|^2 >= 0
    cz = u1  # cos of polar angle measured from the +gamma axis, uniform on the quarter
    th = np.pi * u2 - np.pi / 2  # azimuth: tau = sin th, |xi|^2 = cos th >= 0
    sz = np.sqrt(1 - cz**2)
    gamma = cz
    tau = sz * np.sin(th)
    r2 = sz * np.cos(th)
    phi = 2 * np.pi * u3
    xi = np.sqrt(r2) * np.array([np.cos(phi), np.sin(phi)])
    return float(gamma), float(tau), xi


def sample_points(n: int = 1000, K: CompactSet = CompactSet(), seed: int = 0, stress: bool = True):
    """Sobol sample of the admissible set; with ``stress`` also the near-degenerate corners.

    Stress points put ``a`` at its smallest eigenvalue ``c0`` along an eigenvector with a
    horizontal part and align ``xi`` with that part at ``gamma = tau = 0``, which is where
    an imaginary-axis eigenvalue appears when ``c0 = 0``.
    """
    sob = qmc.Sobol(d=10, scramble=True, seed=seed)
    pts = []
    while len(pts) < n:
        for u in sob.random(1024):
            lam = K.c0 + (K.M - K.c0) * u[0:3]
            R = Rotation.from_rotvec(np.pi * (2 * u[3:6] - 1) / np.sqrt(3)).as_matrix()
            a = R @ np.diag(lam) @ R.T
            a = 0.5 * (a + a.T)
            a0 = K.m + (K.M - K.m) * u[6]
            if a[2, 2] < K.m:
                continue
            gamma, tau, xi = _sphere_point(u[7], u[8], u[9])
            pts.append(ParabolicSymbolPoint(a0, a, gamma, tau, xi))
            if len(pts) == n:
                break
    if stress:
        pts.extend(stress_points(K))
    return pts


def stress_points(K: CompactSet, n_angles: int = 16):
    out = []
    for th in np.linspace(0, np.pi, n_angles, endpoint=False):
        for s in (-1.0, -0.3, 0.0, 0.3, 1.0):
            e = np.array([math.cos(th), math.sin(th), s])
            e /= np.linalg.norm(e)
            # complete to an orthonormal basis
            Q, _ = np.linalg.qr(np.column_stack([e, np.eye(3)[:, :2]]))
            lam = np.array([K.c0, K.M, K.M])
            a = Q @ np.diag(lam) @ Q.T
            a = 0.5 * (a + a.T)
            if a[2, 2] < K.m:
                continue
            h = e[:2] / np.linalg.norm(e[:2])
            out.append(ParabolicSymbolPoint(K.m, a, 0.0, 0.0, h))
    return out


@dataclass
class SymmetrizerSampleReport:
    delta: float
    kappa: float
    n_points: int
    min_real_gap: float
    margins: np.ndarray = field(repr=False)


def select_delta(points, delta_grid=None, kappa_min: float = 1e-3) -> SymmetrizerSampleReport:
    """One ``delta`` for the whole sample: the largest grid value passing at every point."""
    grid = default_delta_grid() if delta_grid is None else np.sort(np.asarray(delta_grid))[::-1]
    gaps = []
    for p in points:
        mu = symbol_eigs(p)
        gaps.append(min(mu[0].real, -mu[1].real))
    gap = float(min(gaps))
    if not gap > 1e-10:
        raise SymmetrizerSearchError(f"eigenvalue on the imaginary axis (min |Re mu| = {gap:.2e})")
    for delta in grid:
        m = np.array([symmetrizer_margins(p, delta)[:2] for p in points])
        if m.min() >= kappa_min:
            return SymmetrizerSampleReport(float(delta), float(m.min()), len(points), gap, m)
    raise SymmetrizerSearchError("no delta on the grid satisfies both inequalities on the sample")


# ---- Hardy --------------------------------------------------------------------------

def hardy_check(f: Callable, df: Callable, panels: int = 64, n: int = 16, bound: float = 4.0):
    """``int f^2 / (z^2 (1-z)^2) / int f'^2`` over ``z < 0``; requires ``f(0) = 0``.

    Returns ``(ratio, error_estimate)`` and raises ``AssertionError`` if the ratio exceeds ``bound``.
    """
    if abs(float(f(np.array([0.0]))[0])) > 1e-12:
        raise KernelDomainError("Hardy inequality needs f(0) = 0")

    def lhs(z):
        out = np.empty_like(z)
        small = np.abs(z) < 1e-8
        out[~small] = f(z[~small]) ** 2 / (z[~small] ** 2 * (1 - z[~small]) ** 2)
        out[small] = df(z[small]) ** 2  # limit at z = 0
        return out

    A, ea = halfline_cc(lhs, panels, n)
    B, eb = halfline_cc(lambda z: df(z) ** 2, panels, n)
    ratio = A / B
    err = ratio * (ea / max(A, 1e-300) + eb / B)
    if not ratio <= bound:
        raise AssertionError(f"Hardy ratio {ratio} exceeds {bound}")
    return ratio, err


def _smooth_cut(z, a, b):
    """1 for ``z >= b``, 0 for ``z <= a``, smooth in between (exp(-1/x) transition)."""
    from .geometry import _smooth_step
    x = (np.asarray(z, dtype=float) - a) / (b - a)
    return _smooth_step(np.atleast_1d(x))[0:2]


def hardy_corpus():
    """Named ``(f, f')`` pairs with ``f(0) = 0``, decaying as ``z -> -inf``."""

    def sin_cut(z):
        c, c1 = _smooth_cut(z, -np.pi, -np.pi / 2)
        return np.sin(z) * c

    def dsin_cut(z):
        c, c1 = _smooth_cut(z, -np.pi, -np.pi / 2)
        return np.cos(z) * c + np.sin(z) * c1 / (np.pi / 2)

    return {
        "z_exp": (lambda z: z * np.exp(z), lambda z: (1 + z) * np.exp(z)),
        "sin_cutoff": (sin_cut, dsin_cut),
        "z_over_1mz2": (lambda z: z / (1 - z) ** 2, lambda z: (1 + z) / (1 - z) ** 3),
        "z_gauss": (lambda z: z * np.exp(-z**2), lambda z: (1 - 2 * z**2) * np.exp(-z**2)),
        "tanh_exp": (lambda z: np.tanh(3 * z) * np.exp(z / 4),
                     lambda z: (3 * (1 - np.tanh(3 * z) ** 2) + np.tanh(3 * z) / 4) * np.exp(z / 4)),
        "slow_root": (lambda z: z / np.sqrt(1 + z**2) * np.exp(z / 20),
                      lambda z: ((1 + z**2) ** -1.5 + z / np.sqrt(1 + z**2) / 20) * np.exp(z / 20)),
    }
