"""Discrete norms: boundary Sobolev, conormal Sobolev, tangential and semiclassical weights.

Conormal fields are ``Z_i = d_i`` horizontally and ``Z_3 = z/(1-z) d_z``.
Multi-indices are tuples ``(alpha_1, .., alpha_d, alpha_3)`` with the vertical
order last; single-field indices use the labels ``1..d`` and ``3``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .grid import StripGrid


def _hat_norm2(fh: np.ndarray, grid: StripGrid, weight=None, boundary=False) -> np.ndarray:
    """Parseval: returns per-node (or per-field) ``int |f|^2 dy`` from rfft coefficients."""
    w = grid.mode_weights if boundary else grid.mode_weights[..., None]
    if weight is not None:
        w = w * (weight if boundary else weight[..., None])
    axes = tuple(range(-grid.d, 0)) if boundary else tuple(range(-grid.d - 1, -1))
    scale = grid.L**grid.d / grid.ny ** (2 * grid.d)
    return np.sum(w * np.abs(fh) ** 2, axis=axes) * scale


def sobolev_weight(grid: StripGrid, s: float) -> np.ndarray:
    return (1.0 + grid.kabs**2) ** s


def boundary_norm(h, s: float, grid: StripGrid | None = None) -> float:
    """``|h|_s = (sum_xi (1 + |xi|^2)^s |h^(xi)|^2)^(1/2)``, normalized so that ``|h|_0 = ||h||_{L^2}``."""
    if grid is None:
        grid, h = h.grid, h.h
    elif hasattr(h, "h"):
        h = h.h
    hh = grid.bfft(np.asarray(h))
    val = _hat_norm2(hh, grid, sobolev_weight(grid, s), boundary=True)
    return float(np.sqrt(np.sum(val)))


def hs_tan(f: np.ndarray, s: float, grid: StripGrid) -> float:
    """Tangential ``H^s`` norm: the boundary multiplier applied per depth level, then ``L^2`` in z."""
    per_z = _hat_norm2(grid.fft(f), grid, sobolev_weight(grid, s))
    return float(np.sqrt(np.sum(per_z @ grid.wz)))


# ---- conormal derivatives ---------------------------------------------------------

def z3_weight(grid: StripGrid) -> np.ndarray:
    return grid.z / (1.0 - grid.z)


def conormal_derivative(f: np.ndarray, i: int, grid: StripGrid) -> np.ndarray:
    """``Z_i f``; ``i`` in ``1..d`` is horizontal, ``i = 3`` is ``z/(1-z) d_z``."""
    if i == 3:
        return z3_weight(grid) * grid.dz(f)
    if 1 <= i <= grid.d:
        return grid.dh(f, i - 1)
    raise IndexError(f"conormal index {i} invalid for d={grid.d}")


def multi_indices(m: int, d: int):
    """All ``alpha`` with ``|alpha| <= m`` (horizontal orders first, vertical last)."""
    return [a for a in product(range(m + 1), repeat=d + 1) if sum(a) <= m]


def z_alpha(f: np.ndarray, alpha, grid: StripGrid) -> np.ndarray:
    """``Z^alpha f = Z_1^a1 .. Z_d^ad Z_3^a3 f`` (the fields commute)."""
    *ah, a3 = alpha
    out = f
    for _ in range(a3):
        out = conormal_derivative(out, 3, grid)
    if any(ah):
        fh = grid.fft(out)
        for k, a in zip(grid.deriv_wavenumbers, ah):
            fh = fh * (1j * grid._kb(k)) ** a
        out = grid.ifft(fh)
    return out


def all_z_alpha(f: np.ndarray, m: int, grid: StripGrid) -> dict:
    """``{alpha: Z^alpha f}`` for ``|alpha| <= m``, sharing the vertical work."""
    out = {}
    g = f
    for a3 in range(m + 1):
        gh = grid.fft(g)
        for ah in product(range(m - a3 + 1), repeat=grid.d):
            if sum(ah) > m - a3:
                continue
            mult = 1.0
            for k, a in zip(grid.deriv_wavenumbers, ah):
                mult = mult * (1j * grid._kb(k)) ** a
            out[ah + (a3,)] = grid.ifft(gh * mult) if any(ah) else g
        g = conormal_derivative(g, 3, grid)
    return out


def depth_window(grid: StripGrid, full: float = 0.5, zero: float = 0.75) -> np.ndarray:
    """Smooth weight in z: 1 on ``z >= -full H``, 0 on ``z <= -zero H``.

    Used to keep the artificial bottom of the truncated strip out of high-order
    conormal norms; Chebyshev differentiation amplifies round-off there like ``nz^(2m)``.
    """
    from .geometry import _smooth_step
    x = (grid.z + zero * grid.H) / ((zero - full) * grid.H)
    return _smooth_step(x)[0]


def _windowed_l2(f, grid, window):
    if window is None:
        return grid.l2(f)
    return grid.l2(f * np.sqrt(window))


def _windowed_sup(f, window):
    if window is None:
        return float(np.abs(f).max())
    return float(np.abs(f[..., window > 0]).max())


def conormal_norm(f: np.ndarray, m: int, grid: StripGrid, window: np.ndarray | None = None) -> float:
    """``||f||_m^2 = sum_{|alpha| <= m} ||Z^alpha f||^2`` with the flat measure; components summed.

    ``window`` (a z-profile) weights the integrand.
    """
    if m < 0:
        return 0.0
    return float(np.sqrt(sum(_windowed_l2(z, grid, window) ** 2 for z in all_z_alpha(f, m, grid).values())))


def conormal_sup_norm(f: np.ndarray, m: int, grid: StripGrid, window: np.ndarray | None = None) -> float:
    """``||f||_{m,inf} = sum_{|alpha| <= m} ||Z^alpha f||_{L^inf}`` (over the support of ``window``)."""
    if m < 0:
        return 0.0
    return float(sum(_windowed_sup(z, window) for z in all_z_alpha(f, m, grid).values()))


def em_norm(f: np.ndarray, m: int, grid: StripGrid) -> float:
    """``||f||_{E^m}^2 = ||f||_m^2 + ||d_z f||_{m-1}^2``."""
    return float(np.hypot(conormal_norm(f, m, grid), conormal_norm(grid.dz(f), m - 1, grid)))


def em_sup_norm(f: np.ndarray, m: int, grid: StripGrid) -> float:
    return conormal_sup_norm(f, m, grid) + conormal_sup_norm(grid.dz(f), m - 1, grid)


def anisotropic_weight(gamma, tau, xi, eps):
    """``<zeta^eps> = (gamma^2 + tau^2 + |sqrt(eps) xi|^4)^(1/4)``; ``xi`` is ``|xi|`` (or a vector on the last axis via ``np.linalg.norm`` by the caller)."""
    gamma = np.asarray(gamma, dtype=float)
    if np.any(gamma < 1):
        raise ValueError("gamma must be >= 1")
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    xi2 = eps * np.asarray(xi, dtype=float) ** 2
    return (gamma**2 + np.asarray(tau, dtype=float) ** 2 + xi2**2) ** 0.25


def embedding_ratio(f: np.ndarray, grid: StripGrid, s1: float = 2.0, s2: float = 1.0) -> float:
    """``||f||_inf^2 / (||d_z f||_{H^s2_tan} ||f||_{H^s1_tan})``."""
    return float(np.abs(f).max() ** 2 / (hs_tan(grid.dz(f), s2, grid) * hs_tan(f, s1, grid)))


@dataclass
class NormReport:
    """Named nonnegative norm values; serializes to one CSV row."""

    values: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.values.items():
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"norm {k!r} = {v} is not a finite nonnegative number")

    def __getitem__(self, key):
        return self.values[key]

    def row(self, columns) -> list[float]:
        return [self.values[c] for c in columns]


def norm_report(f: np.ndarray, grid: StripGrid, m: int, h=None) -> NormReport:
    vals = {
        f"H^{m}_co": conormal_norm(f, m, grid),
        f"E^{m}": em_norm(f, m, grid),
        "W^{1,inf}_co": conormal_sup_norm(f, 1, grid),
    }
    if h is not None:
        vals[f"|h|_{m}"] = boundary_norm(h, m, grid)
    return NormReport(vals)
