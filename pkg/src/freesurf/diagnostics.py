"""Monitored quantities: good unknown, S_n, vorticity, Taylor coefficient, layer width, Q_m."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import function_spaces as fs
from .elliptic import pressure_euler
from .geometry import DiffeoFrame
from .grid import StripGrid

CSV_COLUMNS = ("t", "eps", "Qm_total", "Vm_norm", "h_m", "sqrt_eps_h_mhalf", "Sn_m2", "Sn_1inf",
               "taylor_min", "energy_residual", "div_residual", "layer_width")

NULL_WIDTH = math.nan


@dataclass
class GoodUnknown:
    """``V^alpha = Z^alpha v - d_z^phi v Z^alpha eta`` for ``1 <= |alpha| <= m``, ``V^0 = v``."""

    m: int
    fields: dict

    def __getitem__(self, alpha):
        return self.fields[tuple(alpha)]

    def norm(self, grid: StripGrid, window: np.ndarray | None = None) -> float:
        """``||V^m||`` summed over all stored multi-indices (flat L^2, optionally z-weighted)."""
        w = 1.0 if window is None else np.sqrt(window)
        return float(np.sqrt(sum(grid.l2(V * w) ** 2 for V in self.fields.values())))


def good_unknown(v: np.ndarray, frame: DiffeoFrame, m: int) -> GoodUnknown:
    g = frame.grid
    dzphi_v = g.dz(v) / frame.J
    zeta = fs.all_z_alpha(frame.eta, m, g)
    zv = [fs.all_z_alpha(vc, m, g) for vc in v]
    out = {}
    for alpha, ze in zeta.items():
        if sum(alpha) == 0:
            out[alpha] = v.copy()
        else:
            out[alpha] = np.stack([zv[c][alpha] for c in range(len(v))]) - dzphi_v * ze
    return GoodUnknown(m, out)


def s_n(v: np.ndarray, frame: DiffeoFrame) -> np.ndarray:
    """``S_n = Pi S^phi v n`` with ``Pi = Id - n (x) n``, at every node (trace is ``[..., 0]``)."""
    S = frame.strain(v)
    n = frame.n
    Sn = np.einsum("ij...,j...->i...", S, n)
    return Sn - n * np.einsum("i...,i...->...", n, Sn)


def vorticity(v: np.ndarray, frame: DiffeoFrame):
    """``omega = curl^phi v`` and the residual of ``d_z v . N = -d_z phi sum_i d_i v_i``.

    In 2-D ``omega`` is the scalar ``d_1^phi v_3 - d_3^phi v_1``.
    """
    g = frame.grid
    G = frame.jacobian_phi(v)  # G[i, j] = d_j^phi v_i
    if g.d == 1:
        omega = G[1, 0] - G[0, 1]
    else:
        omega = np.stack([G[2, 1] - G[1, 2], G[0, 2] - G[2, 0], G[1, 0] - G[0, 1]])
    dzv = g.dz(v)
    lhs = np.einsum("i...,i...->...", dzv, frame.N)
    rhs = -frame.J * sum(g.dh(v[i], i) for i in range(g.d))
    return omega, lhs - rhs


def taylor_min(v, frame, g: float = 1.0, bottom: str = "dirichlet_zero") -> float:
    _, taylor, _ = pressure_euler(v, frame, g, bottom)
    return float(taylor.min())


def taylor_series(pairs, g: float = 1.0, bottom: str = "dirichlet_zero") -> np.ndarray:
    """Boundary minimum of ``g - d_z^phi q^E`` for each ``(v, frame)`` in the sequence; never raises on sign."""
    return np.array([taylor_min(v, fr, g, bottom) for v, fr in pairs])


def layer_profile(v_eps: np.ndarray, v0: np.ndarray, grid: StripGrid) -> np.ndarray:
    """y-averaged Euclidean norm of ``d_z (v_eps - v0)`` at each depth node."""
    dz = grid.dz(v_eps - v0)
    mag = np.sqrt(np.sum(dz**2, axis=0))
    return mag.mean(axis=tuple(range(grid.d)))


def layer_width(v_eps: np.ndarray, v0: np.ndarray, grid: StripGrid, floor: float = 1e-14) -> float:
    """Depth at which the profile first falls to ``1/e`` of its surface value.

    Log-linear interpolation between nodes, so exponential profiles are recovered exactly.
    Returns :data:`NULL_WIDTH` when no layer is detected.
    """
    p = layer_profile(v_eps, v0, grid)
    if not p[0] > floor * max(1.0, np.abs(v0).max()):
        return NULL_WIDTH
    target = p[0] / math.e
    below = np.nonzero(p < target)[0]
    if below.size == 0:
        return NULL_WIDTH
    j = below[0]
    z0, z1 = grid.z[j - 1], grid.z[j]
    l0, l1 = np.log(p[j - 1]), np.log(max(p[j], 1e-300))
    z = z0 + (np.log(target) - l0) * (z1 - z0) / (l1 - l0)
    return float(-z)


# ---- Q_m --------------------------------------------------------------------------

def monitor_window(grid: StripGrid, window=(0.5, 0.75)):
    """z-weight for the volume norms of ``Q_m``; ``None`` or ``()`` means the whole strip."""
    return fs.depth_window(grid, *window) if window else None


def qm_terms(v: np.ndarray, frame: DiffeoFrame, eps: float, m: int, window=(0.5, 0.75)) -> dict:
    """Ingredients of ``Q_m``; norms (not squares), and the total as a sum of squares.

    Volume norms are taken under :func:`monitor_window`, which drops the bottom quarter
    of the strip (see :func:`freesurf.function_spaces.depth_window`).
    """
    g = frame.grid
    h = frame.h
    w = monitor_window(g, window)
    Sn = s_n(v, frame)
    dzSn = g.dz(Sn)
    terms = {
        "h_m": fs.boundary_norm(h, m, g),
        "sqrt_eps_h_mhalf": math.sqrt(eps) * fs.boundary_norm(h, m + 0.5, g),
        "Vm_norm": good_unknown(v, frame, m).norm(g, w),
        "Sn_m2": fs.conormal_norm(Sn, m - 2, g, w),
        "Sn_1inf": fs.conormal_sup_norm(Sn, 1, g, w),
        "sqrt_eps_dzSn_inf": math.sqrt(eps) * (float(np.abs(dzSn).max()) if w is None
                                               else float(np.abs(dzSn[..., w > 0]).max())),
    }
    terms["Qm_total"] = sum(x**2 for x in terms.values())
    return terms


@dataclass
class MonitorSeries:
    """Per-step monitor rows plus a running ``L^4``-in-time norm of ``||d_z v||_{m-1}``."""

    eps: float
    m: int = 4
    window: tuple = (0.5, 0.75)
    rows: list = field(default_factory=list)
    _l4_acc: float = 0.0
    _last: tuple | None = None

    def record(self, t: float, v: np.ndarray, frame: DiffeoFrame, g: float = 1.0,
               energy_residual: float = 0.0, div_residual: float = 0.0,
               layer: float = NULL_WIDTH, taylor: float | None = None) -> dict:
        terms = qm_terms(v, frame, self.eps, self.m, self.window)
        if taylor is None:
            taylor = taylor_min(v, frame, g)
        row = {"t": t, "eps": self.eps, "taylor_min": taylor, "energy_residual": energy_residual,
               "div_residual": div_residual, "layer_width": layer}
        row.update({k: terms[k] for k in CSV_COLUMNS if k in terms})
        self.rows.append(row)
        g = frame.grid
        dzv = fs.conormal_norm(g.dz(v), self.m - 1, g, monitor_window(g, self.window))
        if self._last is not None:
            t0, f0 = self._last
            self._l4_acc += 0.5 * (t - t0) * (f0**4 + dzv**4)
        self._last = (t, dzv)
        return row

    @property
    def dzv_l4(self) -> float:
        return self._l4_acc ** 0.25

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def qm_sup(self) -> float:
        return float(self.column("Qm_total").max())
