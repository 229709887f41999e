"""Fourier x Chebyshev collocation grid on the truncated strip.

Horizontal directions are periodic with period ``L`` and carry ``ny`` equispaced
points each; the vertical direction is ``z in [-H, 0]`` discretized with the
Chebyshev-Gauss-Lobatto nodes ``z_j = H (cos(pi j / nz) - 1) / 2``, so that
``z[0] = 0`` is the free surface and ``z[-1] = -H`` the bottom.

Fields are numpy arrays whose trailing ``d + 1`` axes are the grid axes
(horizontal axes first, vertical last).  Any leading axes are component axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


def cheb(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev differentiation matrix and nodes on [-1, 1] (x_0 = 1)."""
    if n == 0:
        return np.zeros((1, 1)), np.ones(1)
    x = np.cos(np.pi * np.arange(n + 1) / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


def clenshaw_curtis(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on the nodes of :func:`cheb` (sum to 2)."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    v = np.ones(n - 1)
    inner = slice(1, n)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
        v -= np.cos(n * theta[inner]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
    w[inner] = 2.0 * v / n
    return w


def bary_weights(x: np.ndarray) -> np.ndarray:
    w = np.array([1.0 / np.prod(xi - np.delete(x, i)) for i, xi in enumerate(x)])
    return w / np.abs(w).max()


def interp_matrix(x: np.ndarray, xe: np.ndarray) -> np.ndarray:
    """Barycentric Lagrange interpolation from nodes ``x`` to points ``xe``."""
    w = bary_weights(x)
    xe = np.atleast_1d(xe)
    M = np.zeros((xe.size, x.size))
    for r, p in enumerate(xe):
        diff = p - x
        hit = np.isclose(diff, 0.0, atol=1e-14)
        if hit.any():
            M[r, np.argmax(hit)] = 1.0
        else:
            t = w / diff
            M[r] = t / t.sum()
    return M


def lagrange_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix of the polynomial interpolant through ``x``."""
    w = bary_weights(x)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    D = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


@dataclass(frozen=True)
class StripGrid:
    """Tensor grid on ``T^d x [-H, 0]`` with ``T = R / (L Z)``.

    ``nz`` is the Chebyshev polynomial degree; there are ``nz + 1`` vertical nodes.
    """

    ny: int = 128
    nz: int = 64
    L: float = 2 * np.pi
    H: float = 2.0
    d: int = 1
    _cache: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"d must be 1 or 2, got {self.d}")
        if self.ny < 4 or self.ny & (self.ny - 1):
            raise ValueError(f"ny must be a power of two >= 4, got {self.ny}")
        if self.nz < 4:
            raise ValueError(f"nz must be >= 4, got {self.nz}")
        if self.L <= 0 or self.H <= 0:
            raise ValueError("L and H must be positive")

    # ---- geometry -------------------------------------------------------
    @property
    def hshape(self) -> tuple[int, ...]:
        return (self.ny,) * self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return self.hshape + (self.nz + 1,)

    @cached_property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * (self.L / self.ny)

    @cached_property
    def _cheb(self):
        return cheb(self.nz)

    @cached_property
    def z(self) -> np.ndarray:
        return self.H * (self._cheb[1] - 1.0) / 2.0

    @cached_property
    def Dz(self) -> np.ndarray:
        return self._cheb[0] * (2.0 / self.H)

    @cached_property
    def wz(self) -> np.ndarray:
        return clenshaw_curtis(self.nz) * (self.H / 2.0)

    @property
    def dy(self) -> float:
        return self.L / self.ny

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcast to ``shape`` (horizontal..., z)."""
        axes = [self.y] * self.d + [self.z]
        return tuple(np.meshgrid(*axes, indexing="ij"))

    # ---- spectral machinery ----------------------------------------------
    @property
    def haxes(self) -> tuple[int, ...]:
        return tuple(range(-(self.d + 1), -1))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Wavenumber arrays for the rfftn layout, broadcastable to the mode grid."""
        k_full = np.fft.fftfreq(self.ny, d=self.dy) * 2 * np.pi
        k_half = np.fft.rfftfreq(self.ny, d=self.dy) * 2 * np.pi
        out = []
        for i in range(self.d):
            k = k_half if i == self.d - 1 else k_full
            s = [1] * self.d
            s[i] = k.size
            out.append(k.reshape(s))
        return tuple(out)

    @cached_property
    def deriv_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Like :attr:`wavenumbers` with the Nyquist entry zeroed (odd derivatives)."""
        out = []
        for k in self.wavenumbers:
            k = k.copy()
            flat = k.reshape(-1)
            flat[np.isclose(np.abs(flat), np.pi / self.dy)] = 0.0
            out.append(k)
        return tuple(out)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(sum(k**2 for k in self.wavenumbers))

    @cached_property
    def mode_weights(self) -> np.ndarray:
        """Multiplicity of each rfftn mode in the full spectrum (Parseval weights)."""
        n_half = self.ny // 2 + 1
        w = np.full(n_half, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        s = [1] * self.d
        s[-1] = n_half
        return np.broadcast_to(w.reshape(s), self.hshape[:-1] + (n_half,)).copy()

    def fft(self, f: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(f, axes=self.haxes)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(fh, s=self.hshape, axes=self.haxes)

    def _kb(self, k: np.ndarray) -> np.ndarray:
        # wavenumber array broadcast against (..., modes..., z)
        return k[..., None]

    def dh(self, f: np.ndarray, i: int) -> np.ndarray:
        """Spectral derivative along horizontal axis ``i`` of a strip field."""
        k = self._kb(self.deriv_wavenumbers[i])
        return self.ifft(1j * k * self.fft(f))

    def dz(self, f: np.ndarray) -> np.ndarray:
        return np.einsum("ij,...j->...i", self.Dz, f)

    def grad(self, f: np.ndarray) -> np.ndarray:
        """Flat gradient (horizontal components then vertical), shape (d+1, ...)."""
        fh = self.fft(f)
        comps = [self.ifft(1j * self._kb(k) * fh) for k in self.deriv_wavenumbers]
        comps.append(self.dz(f))
        return np.stack(comps)

    def div(self, F: np.ndarray) -> np.ndarray:
        """Flat divergence of a (d+1)-component field."""
        out = self.dz(F[self.d])
        for i in range(self.d):
            out = out + self.dh(F[i], i)
        return out

    # ---- boundary fields (horizontal only) -------------------------------
    def bfft(self, g: np.ndarray) -> np.ndarray:
        return np.fft.rfftn(g, axes=tuple(range(-self.d, 0)))

    def bifft(self, gh: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(gh, s=self.hshape, axes=tuple(range(-self.d, 0)))

    def bdh(self, g: np.ndarray, i: int) -> np.ndarray:
        return self.bifft(1j * self.deriv_wavenumbers[i] * self.bfft(g))

    # ---- quadrature ------------------------------------------------------
    def integrate(self, f: np.ndarray) -> np.ndarray | float:
        """Integral over the strip with the flat measure dy dz."""
        f = np.einsum("...j,j->...", f, self.wz)
        return f.sum(axis=tuple(range(-self.d, 0))) * self.dy**self.d

    def bintegrate(self, g: np.ndarray) -> np.ndarray | float:
        return g.sum(axis=tuple(range(-self.d, 0))) * self.dy**self.d

    def l2(self, f: np.ndarray) -> float:
        """Flat L^2 norm, summing over any leading component axes."""
        return float(np.sqrt(np.sum(self.integrate(np.abs(f) ** 2))))

    def bl2(self, g: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.bintegrate(np.abs(g) ** 2))))

    def cache(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]
