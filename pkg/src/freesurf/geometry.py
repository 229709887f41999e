"""Smoothing diffeomorphism of the strip and the metric quantities built on it.

The moving fluid domain ``{x_3 < h(t, y)}`` is pulled back to the fixed strip by
``(y, z) -> (y, phi(y, z))`` with ``phi = A z + eta`` and
``eta^(xi, z) = chi(|z| |xi|) h^(xi)``.  Every other module reads the metric
through an immutable :class:`DiffeoFrame`.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .grid import StripGrid


class DiffeomorphismBreakdown(RuntimeError):
    """Raised when ``d_z phi`` drops below the admissible floor ``c0``."""

    def __init__(self, message, location=None, value=None):
        super().__init__(message)
        self.location = location
        self.value = value


@dataclass(frozen=True)
class SurfaceState:
    """Free-surface elevation on the periodic horizontal grid."""

    h: np.ndarray
    grid: StripGrid
    t: float = 0.0

    def __post_init__(self):
        if self.h.shape != self.grid.hshape:
            raise ValueError(f"h has shape {self.h.shape}, grid expects {self.grid.hshape}")
        if not np.isrealobj(self.h):
            raise TypeError("h must be real")

    @cached_property
    def h_hat(self) -> np.ndarray:
        return self.grid.bfft(self.h)

    @classmethod
    def single_mode(cls, grid: StripGrid, k: float, a: float, t: float = 0.0) -> "SurfaceState":
        """``h = a cos(k y_1)``."""
        y = grid.y.reshape((-1,) + (1,) * (grid.d - 1))
        h = np.broadcast_to(a * np.cos(k * y), grid.hshape).copy()
        return cls(h, grid, t)


def _smooth_step(x):
    """C-infinity step on [0, 1] built from exp(-1/x); returns value, 1st, 2nd derivative."""
    x = np.clip(x, 0.0, 1.0)

    def f(u):
        out = np.zeros_like(u)
        m = u > 0
        out[m] = np.exp(-1.0 / u[m])
        return out

    def f1(u):
        out = np.zeros_like(u)
        m = u > 0
        out[m] = np.exp(-1.0 / u[m]) / u[m] ** 2
        return out

    def f2(u):
        out = np.zeros_like(u)
        m = u > 0
        um = u[m]
        out[m] = np.exp(-1.0 / um) * (1.0 - 2.0 * um) / um**4
        return out

    a, b = f(x), f(1.0 - x)
    a1, b1 = f1(x), -f1(1.0 - x)
    a2, b2 = f2(x), f2(1.0 - x)
    s = a + b
    s1 = a1 + b1
    s2 = a2 + b2
    val = a / s
    d1 = (a1 * s - a * s1) / s**2
    d2 = (a2 * s - a * s2) / s**2 - 2.0 * s1 * (a1 * s - a * s1) / s**3
    return val, d1, d2


@dataclass(frozen=True)
class CutoffProfile:
    """Radial cutoff: 1 on ``[0, r1]``, 0 on ``[r2, inf)``, smooth and monotone between."""

    r1: float = 1.0
    r2: float = 2.0

    def __post_init__(self):
        if not (self.r1 >= 1.0 and self.r2 > self.r1):
            raise ValueError(f"need r2 > r1 >= 1, got r1={self.r1}, r2={self.r2}")

    def __call__(self, s, deriv: int = 0):
        s = np.abs(np.asarray(s, dtype=float))
        x = (self.r2 - s) / (self.r2 - self.r1)
        vals = _smooth_step(np.atleast_1d(x))
        scale = -1.0 / (self.r2 - self.r1)
        out = vals[deriv] * scale**deriv
        return out.reshape(s.shape)


def extend_surface(h: SurfaceState, chi: CutoffProfile, grid: StripGrid | None = None,
                   derivs: bool = False):
    """Extend ``h`` into the strip mode by mode: ``eta^(xi, z) = chi(|z||xi|) h^(xi)``.

    With ``derivs=True`` also returns ``d_z eta`` and ``d_zz eta`` evaluated from the
    closed-form derivatives of ``chi`` (no vertical collocation error).
    """
    grid = grid or h.grid
    if h.grid.hshape != grid.hshape or h.grid.L != grid.L:
        raise ValueError("surface and strip grids are inconsistent")
    s = grid.kabs[..., None] * np.abs(grid.z)
    hh = h.h_hat[..., None]
    eta = grid.ifft(chi(s) * hh)
    if not derivs:
        return eta
    # d/dz of chi(|z||xi|) = -|xi| chi'(.) for z < 0
    k = grid.kabs[..., None]
    deta_z = grid.ifft(-k * chi(s, 1) * hh)
    deta_zz = grid.ifft(k**2 * chi(s, 2) * hh)
    return eta, deta_z, deta_zz


def choose_A(h0: SurfaceState, chi: CutoffProfile) -> float:
    """``1 + max |d_z eta(0, .)|`` so that ``d_z phi >= 1`` initially."""
    _, dz_eta, _ = extend_surface(h0, chi, derivs=True)
    return 1.0 + float(np.max(np.abs(dz_eta)))


@dataclass(frozen=True, eq=False)
class DiffeoFrame:
    """Metric of ``phi = A z + eta`` on the strip grid.

    ``grad_phi`` holds ``(d_1 phi, .., d_d phi, d_z phi)``; ``hess_eta`` the full
    Hessian of ``eta``.  ``P`` and ``E`` carry the two matrix indices first.
    """

    grid: StripGrid
    A: float
    h: np.ndarray
    eta: np.ndarray
    grad_eta: np.ndarray
    hess_eta: np.ndarray
    c0: float

    @property
    def d(self) -> int:
        return self.grid.d

    @cached_property
    def phi(self) -> np.ndarray:
        return self.A * self.grid.mesh()[-1] + self.eta

    @cached_property
    def grad_phi(self) -> np.ndarray:
        g = self.grad_eta.copy()
        g[self.d] += self.A
        return g

    @property
    def J(self) -> np.ndarray:
        return self.grad_phi[self.d]

    @cached_property
    def N(self) -> np.ndarray:
        """``(-grad_y phi, 1)`` at every grid point."""
        N = -self.grad_phi.copy()
        N[self.d] = 1.0
        return N

    @cached_property
    def n(self) -> np.ndarray:
        return self.N / np.sqrt(np.sum(self.N**2, axis=0))

    @cached_property
    def P(self) -> np.ndarray:
        d = self.d
        P = np.zeros((d + 1, d + 1) + self.grid.shape)
        for i in range(d):
            P[i, i] = self.J
            P[d, i] = -self.grad_phi[i]
        P[d, d] = 1.0
        return P

    @cached_property
    def E(self) -> np.ndarray:
        return np.einsum("ik...,jk...->ij...", self.P, self.P) / self.J

    def E_min_eig(self) -> np.ndarray:
        """Smallest eigenvalue of E at each grid point."""
        Em = np.moveaxis(self.E, (0, 1), (-2, -1))
        return np.linalg.eigvalsh(Em)[..., 0]

    # ---- transformed derivatives -------------------------------------------
    def dphi(self, f: np.ndarray, i: int, grad_f: np.ndarray | None = None) -> np.ndarray:
        """``d_i^phi f``: ``d_i - (d_i phi / d_z phi) d_z`` horizontally, ``d_z / d_z phi`` vertically.

        ``i`` runs over ``0..d``; ``i == d`` is the vertical direction.
        """
        if not 0 <= i <= self.d:
            raise IndexError(f"direction {i} out of range for d={self.d}")
        g = self.grid
        fz = g.dz(f) if grad_f is None else grad_f[self.d]
        if i == self.d:
            return fz / self.J
        fi = g.dh(f, i) if grad_f is None else grad_f[i]
        return fi - self.grad_phi[i] / self.J * fz

    def grad_phi_of(self, f: np.ndarray) -> np.ndarray:
        """``nabla^phi f = P^T nabla f / d_z phi`` (components stacked first)."""
        gf = self.grid.grad(f)
        return np.stack([self.dphi(f, i, gf) for i in range(self.d + 1)])

    def jacobian_phi(self, v: np.ndarray) -> np.ndarray:
        """``G[i, j] = d_j^phi v_i`` for a (d+1)-component field."""
        return np.stack([self.grad_phi_of(vi) for vi in v])

    def div_phi(self, v: np.ndarray) -> np.ndarray:
        """``nabla^phi . v`` in divergence form ``div(P v) / d_z phi``."""
        Pv = np.einsum("ij...,j...->i...", self.P, v)
        return self.grid.div(Pv) / self.J

    def div_phi_direct(self, v: np.ndarray) -> np.ndarray:
        """``sum_i d_i^phi v_i`` (non-conservative form)."""
        return sum(self.dphi(v[i], i) for i in range(self.d + 1))

    def laplace_phi(self, f: np.ndarray) -> np.ndarray:
        """``Delta^phi f = div(E grad f) / d_z phi``."""
        Egf = np.einsum("ij...,j...->i...", self.E, self.grid.grad(f))
        return self.grid.div(Egf) / self.J

    def strain(self, v: np.ndarray) -> np.ndarray:
        """Symmetric transformed gradient ``S^phi v``."""
        G = self.jacobian_phi(v)
        return 0.5 * (G + np.swapaxes(G, 0, 1))

    @property
    def dV(self) -> np.ndarray:
        return self.J

    def volume_integral(self, f: np.ndarray) -> float:
        return float(np.sum(self.grid.integrate(f * self.J)))


def assemble_frame(h: SurfaceState, A: float, chi: CutoffProfile, grid: StripGrid | None = None,
                   c0: float = 0.1) -> DiffeoFrame:
    """Build the metric of ``phi = A z + eta[h]``; refuses frames with ``d_z phi < c0``."""
    grid = grid or h.grid
    # vertical derivatives by collocation so that discrete mixed partials commute
    eta = extend_surface(h, chi, grid)
    d = grid.d
    eta_hat = grid.fft(eta)
    ks = [grid._kb(k) for k in grid.deriv_wavenumbers]
    grad = np.empty((d + 1,) + grid.shape)
    hess = np.empty((d + 1, d + 1) + grid.shape)
    eta_z = grid.dz(eta)
    eta_z_hat = grid.fft(eta_z)
    for i in range(d):
        grad[i] = grid.ifft(1j * ks[i] * eta_hat)
        for j in range(i, d):
            hess[i, j] = hess[j, i] = grid.ifft(-ks[i] * ks[j] * eta_hat)
        hess[i, d] = hess[d, i] = grid.ifft(1j * ks[i] * eta_z_hat)
    grad[d] = eta_z
    hess[d, d] = grid.dz(eta_z)
    J = A + eta_z
    jmin = float(J.min())
    if jmin < c0:
        loc = np.unravel_index(np.argmin(J), J.shape)
        coords = tuple(float(grid.y[i]) for i in loc[:-1]) + (float(grid.z[loc[-1]]),)
        raise DiffeomorphismBreakdown(
            f"d_z phi = {jmin:.3e} < c0 = {c0} at (y, z) = {coords}", location=coords, value=jmin)
    return DiffeoFrame(grid=grid, A=float(A), h=np.array(h.h, copy=True), eta=eta,
                       grad_eta=grad, hess_eta=hess, c0=c0)


def apply_dphi(f: np.ndarray, i: int, frame: DiffeoFrame) -> np.ndarray:
    return frame.dphi(f, i)


def flat_frame(grid: StripGrid, A: float = 1.0, chi: CutoffProfile | None = None) -> DiffeoFrame:
    return assemble_frame(SurfaceState(np.zeros(grid.hshape), grid), A, chi or CutoffProfile(), grid)
