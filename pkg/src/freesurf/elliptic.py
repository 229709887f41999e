"""Variable-coefficient Dirichlet problems ``-div(E grad rho) = RHS`` on the strip.

The operator is applied matrix-free (Fourier in y, Chebyshev collocation in z) and
inverted by GMRES, left-preconditioned with the flat-frame operator
``E0 = diag(A, .., A, 1/A)``, which decouples into one dense
``(nz+1) x (nz+1)`` solve per horizontal Fourier mode.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .geometry import DiffeoFrame
from .grid import StripGrid

log = logging.getLogger(__name__)

BOTTOM_CONDITIONS = ("dirichlet_zero", "neumann_zero")


class EllipticSetupError(ValueError):
    pass


class EllipticNonConvergence(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass
class EllipticProblem:
    """``-div(E grad rho) = div F`` (or ``= rhs``), ``rho = top`` at z = 0.

    ``neumann_zero`` at the bottom means zero total conormal flux,
    ``(E grad rho + F) . e_z = 0``.
    """

    E: np.ndarray
    top: np.ndarray
    F: np.ndarray | None = None
    rhs: np.ndarray | None = None
    bottom: str = "dirichlet_zero"

    def __post_init__(self):
        if (self.F is None) == (self.rhs is None):
            raise EllipticSetupError("set exactly one of F (divergence form) or rhs")
        if self.bottom not in BOTTOM_CONDITIONS:
            raise EllipticSetupError(f"unknown bottom condition {self.bottom!r}")


@dataclass
class EllipticReport:
    residual: float
    iterations: int
    rhs_norm: float
    raw_residual: float = 0.0


class FlatPoissonPreconditioner:
    """Exact inverse of the flat-frame collocation operator, one mode at a time."""

    def __init__(self, grid: StripGrid, A: float, bottom: str):
        self.grid = grid
        n = grid.nz
        D = grid.Dz
        k2 = sum(k**2 for k in grid.deriv_wavenumbers)
        D2 = D @ D / A
        mats = A * k2[..., None, None] * np.eye(n + 1) - D2
        mats = mats.astype(complex)
        mats[..., 0, :] = 0.0
        mats[..., 0, 0] = 1.0
        mats[..., n, :] = 0.0
        if bottom == "dirichlet_zero":
            mats[..., n, n] = 1.0
        else:
            mats[..., n, :] = D[n] / A
        self.inv = np.linalg.inv(mats)

    def __call__(self, r: np.ndarray) -> np.ndarray:
        g = self.grid
        rh = g.fft(r)
        return g.ifft(np.einsum("...ij,...j->...i", self.inv, rh))


def _flux(E, grid, rho):
    return np.einsum("ij...,j...->i...", E, grid.grad(rho))


def apply_operator(problem: EllipticProblem, grid: StripGrid, rho: np.ndarray) -> np.ndarray:
    """Collocation rows: interior ``-div(E grad rho)``, top Dirichlet, bottom row per condition."""
    flux = _flux(problem.E, grid, rho)
    out = -grid.div(flux)
    out[..., 0] = rho[..., 0]
    if problem.bottom == "dirichlet_zero":
        out[..., -1] = rho[..., -1]
    else:
        out[..., -1] = flux[grid.d][..., -1]
    return out


def assemble_rhs(problem: EllipticProblem, grid: StripGrid) -> np.ndarray:
    if problem.F is not None:
        b = grid.div(problem.F)
    else:
        b = np.array(problem.rhs, dtype=float, copy=True)
    b[..., 0] = problem.top
    if problem.bottom == "dirichlet_zero":
        b[..., -1] = 0.0
    else:
        b[..., -1] = 0.0 if problem.F is None else -problem.F[grid.d][..., -1]
    return b


def _rms(x):
    return float(np.sqrt(np.mean(np.abs(x) ** 2))) if x is not None else 0.0


def residual_norm(problem, grid, rho, b=None):
    """RMS of the collocation residual (boundary rows count as equations, not as quadrature nodes)."""
    b = assemble_rhs(problem, grid) if b is None else b
    return _rms(apply_operator(problem, grid, rho) - b)


def check_positive(E: np.ndarray) -> float:
    Em = np.moveaxis(E, (0, 1), (-2, -1))
    lam = float(np.linalg.eigvalsh(Em)[..., 0].min())
    if not lam > 0:
        raise EllipticSetupError(f"E is not positive definite (min eigenvalue {lam:.3e})")
    return lam


def solve_dirichlet(problem: EllipticProblem, grid: StripGrid, A: float = 1.0, tol: float = 1e-10,
                    max_iter: int = 300, precond: FlatPoissonPreconditioner | None = None,
                    check: bool = True):
    """Solve the problem; returns ``(rho, EllipticReport)``.

    GMRES runs on the left-preconditioned system ``M L rho = M b``.  Because ``M``
    is close to ``L^-1`` the preconditioned residual estimates the solution error,
    and convergence means ``||M (L rho - b)|| <= tol * max(||rho||, ||M b||)`` in RMS.
    The raw collocation residual is reported alongside.
    """
    if check:
        check_positive(problem.E)
    if precond is None:
        precond = FlatPoissonPreconditioner(grid, A, problem.bottom)
    shape = grid.shape
    size = int(np.prod(shape))
    b = assemble_rhs(problem, grid)
    Mb = precond(b)
    mb = _rms(Mb)
    if mb == 0:
        return np.zeros(shape), EllipticReport(0.0, 0, 0.0)

    def matvec(x):
        return precond(apply_operator(problem, grid, x.reshape(shape))).ravel()

    op = LinearOperator((size, size), matvec=matvec, dtype=float)
    count = [0]

    def cb(_):
        count[0] += 1

    x, _ = gmres(op, Mb.ravel(), x0=Mb.ravel(), rtol=0.5 * tol, atol=0.0, restart=60,
                 maxiter=max(1, max_iter // 60 + 1), callback=cb, callback_type="pr_norm")
    rho = x.reshape(shape)
    r = apply_operator(problem, grid, rho) - b
    pres = _rms(precond(r)) / max(_rms(rho), mb)
    report = EllipticReport(residual=pres, iterations=count[0], rhs_norm=_rms(b), raw_residual=_rms(r))
    if not pres <= tol:
        raise EllipticNonConvergence(
            f"elliptic solve stalled: relative residual {pres:.3e} > {tol:.1e} "
            f"after {count[0]} iterations", pres)
    return rho, report


# ---- pressures ------------------------------------------------------------

@dataclass
class PressurePair:
    qE: np.ndarray
    qNS: np.ndarray
    taylor_coeff: np.ndarray
    reports: tuple = ()

    @property
    def q(self):
        return self.qE + self.qNS


def boundary_dz_phi(frame: DiffeoFrame, q: np.ndarray) -> np.ndarray:
    """``d_z^phi q`` at z = 0 from the Chebyshev differentiation row."""
    g = frame.grid
    return np.einsum("j,...j->...", g.Dz[0], q) / frame.J[..., 0]


def euler_rhs(v: np.ndarray, frame: DiffeoFrame) -> np.ndarray:
    """``d_z phi * sum_ij d_i^phi v_j d_j^phi v_i``."""
    G = frame.jacobian_phi(v)
    return frame.J * np.einsum("ij...,ji...->...", G, G)


def pressure_euler(v: np.ndarray, frame: DiffeoFrame, g: float = 1.0, bottom: str = "dirichlet_zero",
                   tol: float = 1e-10, div_warn: float = 1e-6, precond=None):
    """Euler pressure and the Taylor coefficient ``g - d_z^phi q^E`` on the surface."""
    grid = frame.grid
    div = grid.l2(frame.div_phi(v))
    if div > div_warn:
        log.warning("pressure_euler: divergence residual %.2e above %.2e", div, div_warn)
    prob = EllipticProblem(E=frame.E, top=g * frame.h, rhs=euler_rhs(v, frame), bottom=bottom)
    qE, rep = solve_dirichlet(prob, grid, frame.A, tol=tol, precond=precond)
    taylor = g - boundary_dz_phi(frame, qE)
    return qE, taylor, rep


def normal_stress(v: np.ndarray, frame: DiffeoFrame) -> np.ndarray:
    """``S^phi v n . n`` at z = 0."""
    S = frame.strain(v)[..., 0]
    n = frame.n[..., 0]
    return np.einsum("i...,ij...,j...->...", n, S, n)


def pressure_ns(v: np.ndarray, frame: DiffeoFrame, eps: float, bottom: str = "dirichlet_zero",
                tol: float = 1e-10, precond=None):
    grid = frame.grid
    if eps == 0:
        return np.zeros(grid.shape), EllipticReport(0.0, 0, 0.0)
    top = 2.0 * eps * normal_stress(v, frame)
    prob = EllipticProblem(E=frame.E, top=top, rhs=np.zeros(grid.shape), bottom=bottom)
    return solve_dirichlet(prob, grid, frame.A, tol=tol, precond=precond)


def pressure_pair(v, frame, eps, g=1.0, bottom="dirichlet_zero", tol=1e-10):
    qE, taylor, r1 = pressure_euler(v, frame, g, bottom, tol)
    qNS, r2 = pressure_ns(v, frame, eps, bottom, tol)
    return PressurePair(qE, qNS, taylor, (r1, r2))
