"""Time integration of the transformed free-surface Navier-Stokes system.

Unknowns are the velocity ``v`` on the fixed strip and the surface ``h``.  Each step
is an IMEX Runge-Kutta step (ARS(2,2,2), stiffly accurate).  The surface, the
coordinate frame and the moving-frame advection are explicit.  Pressure, viscosity,
incompressibility and the dynamic boundary conditions are implicit in every stage.
A stage therefore solves a generalized Stokes problem in the frozen stage frame:

    v + beta grad^phi q - 2 beta eps div^phi S^phi v = r        (interior)
    div(P v) = 0                                                  (interior)
    t_a . S^phi v N = 0,  q - 2 eps S^phi v n . n = g h          (z = 0)
    v . N = 0,  t_a . S^phi v N = 0                               (z = -H)

with ``t_a = e_a + d_a phi e_z``.  The pressure lives on the interior
Gauss-Lobatto nodes (a degree ``nz - 2`` polynomial in z), which removes the
spurious pressure modes of equal-order collocation.  For ``eps = 0`` the stage
reduces to a pressure Poisson problem with a rigid-bottom flux condition.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .elliptic import EllipticNonConvergence, EllipticProblem, FlatPoissonPreconditioner, solve_dirichlet
from .geometry import CutoffProfile, DiffeoFrame, SurfaceState, assemble_frame, choose_A, extend_surface
from .grid import StripGrid, interp_matrix

log = logging.getLogger(__name__)

# ARS(2,2,2)
_GAM = 1.0 - 1.0 / np.sqrt(2.0)
_DEL = 1.0 - 1.0 / (2.0 * _GAM)


class NumericalBlowup(RuntimeError):
    def __init__(self, message, dump_path=None, t=None):
        super().__init__(message)
        self.dump_path = dump_path
        self.t = t


@dataclass
class Physics:
    g: float = 1.0
    eps: float = 0.0
    chi: CutoffProfile = field(default_factory=CutoffProfile)
    c0: float = 0.1


@dataclass
class FlowState:
    """Velocity on the strip, surface elevation and the frame constant ``A``."""

    v: np.ndarray
    h: np.ndarray
    grid: StripGrid
    A: float
    t: float = 0.0

    def __post_init__(self):
        want = (self.grid.d + 1,) + self.grid.shape
        if self.v.shape != want:
            raise ValueError(f"v has shape {self.v.shape}, expected {want}")
        if self.h.shape != self.grid.hshape:
            raise ValueError(f"h has shape {self.h.shape}, expected {self.grid.hshape}")

    @property
    def surface(self) -> SurfaceState:
        return SurfaceState(self.h, self.grid, self.t)

    def frame(self, phys: Physics) -> DiffeoFrame:
        return assemble_frame(self.surface, self.A, phys.chi, self.grid, phys.c0)

    def copy(self, **kw):
        kw.setdefault("v", self.v.copy())
        kw.setdefault("h", self.h.copy())
        return replace(self, **kw)

    @classmethod
    def at_rest(cls, h0: SurfaceState, chi: CutoffProfile | None = None, A: float | None = None):
        grid = h0.grid
        A = choose_A(h0, chi or CutoffProfile()) if A is None else A
        v = np.zeros((grid.d + 1,) + grid.shape)
        return cls(v, np.array(h0.h, dtype=float), grid, A, h0.t)


def linear_wave_velocity(grid: StripGrid, k: float, a: float, g: float = 1.0, A: float = 1.0) -> np.ndarray:
    """Velocity of the linear progressive wave ``h = a cos(k y_1)`` at t = 0 (potential flow).

    ``Phi = (a omega / k) cosh(k (x + H')) / sinh(k H') sin(k y_1)`` with ``x = A z`` and
    ``H' = A H``; the ``O(a^2)`` displacement by ``eta`` is neglected.
    """
    Hp = A * grid.H
    om = np.sqrt(g * k * np.tanh(k * Hp))
    y = grid.y.reshape((-1,) + (1,) * grid.d)
    x = A * grid.z
    c = a * om / np.sinh(k * Hp)
    v = np.zeros((grid.d + 1,) + grid.shape)
    v[0] = np.broadcast_to(c * np.cosh(k * (x + Hp)) * np.cos(k * y), grid.shape)
    v[grid.d] = np.broadcast_to(c * np.sinh(k * (x + Hp)) * np.sin(k * y), grid.shape)
    return v


# ---- stage operators ---------------------------------------------------------

def stress_divergence(frame: DiffeoFrame, S: np.ndarray) -> np.ndarray:
    """``(div^phi S)_i = div(P S_i.) / d_z phi`` row by row."""
    g = frame.grid
    F = np.einsum("kj...,ij...->ik...", frame.P, S)
    return np.stack([g.div(F[i]) for i in range(frame.d + 1)]) / frame.J


def boundary_stress_rows(frame: DiffeoFrame, S: np.ndarray, j: int) -> np.ndarray:
    """``t_a . S N`` for a < d and ``n . S n`` at vertical node ``j``."""
    d = frame.d
    Sj = S[..., j]
    Nj = frame.N[..., j]
    SN = np.einsum("ik...,k...->i...", Sj, Nj)
    gp = frame.grad_phi[..., j]
    rows = [SN[a] + gp[a] * SN[d] for a in range(d)]
    nj = frame.n[..., j]
    rows.append(np.einsum("i...,i...->...", nj, np.einsum("ik...,k...->i...", Sj, nj)))
    return np.stack(rows)


class _Layout:
    def __init__(self, grid: StripGrid):
        self.grid = grid
        d, n = grid.d, grid.nz
        self.vshape = (d + 1,) + grid.shape
        self.qshape = grid.hshape + (n - 1,)
        self.nv = int(np.prod(self.vshape))
        self.size = self.nv + int(np.prod(self.qshape))
        self.Ip = grid.cache("pn2_interp", lambda: interp_matrix(grid.z[1:-1], grid.z))

    def split(self, x):
        return x[: self.nv].reshape(self.vshape), x[self.nv:].reshape(self.qshape)

    def join(self, v, q):
        return np.concatenate([v.ravel(), q.ravel()])

    def qfull(self, q):
        return np.einsum("ij,...j->...i", self.Ip, q)


class FlatStokesPreconditioner:
    """Exact per-mode inverse of the stage operator in the flat frame ``phi = A z``."""

    def __init__(self, grid: StripGrid, A: float, beta: float, eps: float):
        lay = _Layout(grid)
        self.lay = lay
        d, n = grid.d, grid.nz
        D = grid.Dz
        Ip = lay.Ip
        m = n + 1
        M = (d + 1) * m + (n - 1)
        ks = np.broadcast_arrays(*grid.deriv_wavenumbers)
        mshape = ks[0].shape
        I = np.eye(m)
        inner = slice(1, n)
        mats = np.zeros(mshape + (M, M), dtype=complex)

        def V(c):
            return slice(c * m, (c + 1) * m)

        Q = slice((d + 1) * m, M)
        # derivative operators per direction, shape mshape + (m, m)
        ops = [1j * k[..., None, None] * I for k in ks] + [np.broadcast_to(D / A, mshape + (m, m))]
        for c in range(d + 1):
            blk = np.zeros(mshape + (m, m), dtype=complex) + I
            for b in range(d + 1):
                blk = blk - beta * eps * ops[b] @ ops[b]
            mats[..., V(c), V(c)] = blk
            for b in range(d + 1):
                mats[..., V(c), V(b)] -= beta * eps * ops[b] @ ops[c]
            mats[..., V(c), Q] = beta * ops[c] @ Ip
            # boundary rows overwrite
            for j in (0, n):
                mats[..., c * m + j, :] = 0.0
            if c < d:
                for j in (0, n):
                    mats[..., c * m + j, V(c)] = 0.5 * ops[d][..., j, :]
                    mats[..., c * m + j, V(d)] = 0.5 * ops[c][..., j, :]
            else:
                mats[..., c * m, Q] = Ip[0]
                mats[..., c * m, V(d)] = -2.0 * eps * ops[d][..., 0, :]
                mats[..., c * m + n, d * m + n] = 1.0
        for c in range(d):
            mats[..., Q, V(c)] = A * ops[c][..., inner, :]
        mats[..., Q, V(d)] = D[inner]
        self.inv = np.linalg.inv(mats)
        self.m = m

    def __call__(self, x):
        lay, g = self.lay, self.lay.grid
        v, q = lay.split(x)
        vh = g.fft(v)
        qh = g.fft(q)
        mshape = qh.shape[:-1]
        vec = np.concatenate([np.moveaxis(vh, 0, -2).reshape(mshape + (-1,)), qh], axis=-1)
        out = np.einsum("...ij,...j->...i", self.inv, vec)
        d1 = g.d + 1
        ov = np.moveaxis(out[..., : d1 * self.m].reshape(mshape + (d1, self.m)), -2, 0)
        oq = out[..., d1 * self.m:]
        return lay.join(g.ifft(ov), g.ifft(oq))


class StokesStage:
    """Matrix-free generalized Stokes operator in a frozen frame."""

    def __init__(self, frame: DiffeoFrame, beta: float, eps: float):
        self.frame, self.beta, self.eps = frame, beta, eps
        self.lay = _Layout(frame.grid)

    def apply(self, x):
        fr, lay, g = self.frame, self.lay, self.frame.grid
        d, n = g.d, g.nz
        v, q = lay.split(x)
        qf = lay.qfull(q)
        S = fr.strain(v)
        mom = v + self.beta * fr.grad_phi_of(qf) - 2.0 * self.beta * self.eps * stress_divergence(fr, S)
        top = boundary_stress_rows(fr, S, 0)
        bot = boundary_stress_rows(fr, S, n)
        mom[:d, ..., 0] = top[:d]
        mom[d, ..., 0] = qf[..., 0] - 2.0 * self.eps * top[d]
        mom[:d, ..., n] = bot[:d]
        mom[d, ..., n] = np.einsum("i...,i...->...", v[..., n], fr.N[..., n])
        Pv = np.einsum("ij...,j...->i...", fr.P, v)
        cont = g.div(Pv)[..., 1:n]
        return lay.join(mom, cont)

    def rhs(self, r, g_h):
        lay = self.lay
        n = lay.grid.nz
        d = lay.grid.d
        b = r.copy()
        b[..., 0] = 0.0
        b[..., n] = 0.0
        b[d, ..., 0] = g_h
        return lay.join(b, np.zeros(lay.qshape))


@dataclass
class StageReport:
    iterations: int
    residual: float


def solve_stokes_stage(frame, beta, eps, r, g_h, precond, tol=1e-11, max_iter=400):
    """Solve one implicit stage by left-preconditioned GMRES; returns ``(v, q_full, report)``.

    The stopping test is on the preconditioned residual relative to the solution size.
    """
    st = StokesStage(frame, beta, eps)
    lay = st.lay
    Mb = precond(st.rhs(r, g_h))
    mb = np.linalg.norm(Mb)
    if mb == 0:
        v, q = lay.split(np.zeros(lay.size))
        return v, lay.qfull(q), StageReport(0, 0.0)
    op = LinearOperator((lay.size, lay.size), matvec=lambda y: precond(st.apply(y)), dtype=float)
    it = [0]

    def cb(_):
        it[0] += 1

    x, _ = gmres(op, Mb, x0=Mb, rtol=0.5 * tol, atol=0.0, restart=80,
                 maxiter=max(1, max_iter // 80 + 1), callback=cb, callback_type="pr_norm")
    res = np.linalg.norm(op.matvec(x) - Mb) / max(np.linalg.norm(x), mb)
    if not res <= tol:
        raise EllipticNonConvergence(f"stage solve stalled: relative residual {res:.3e}", res)
    v, q = lay.split(x)
    return v, lay.qfull(q), StageReport(it[0], float(res))


def solve_projection_stage(frame, beta, r, g_h, precond, tol=1e-11):
    """Inviscid stage: ``v = r - beta grad^phi q`` with q from a flux-form Poisson problem."""
    grid = frame.grid
    F = -np.einsum("ij...,j...->i...", frame.P, r) / beta
    prob = EllipticProblem(E=frame.E, top=g_h, F=F, bottom="neumann_zero")
    q, rep = solve_dirichlet(prob, grid, frame.A, tol=tol, precond=precond, check=False)
    v = r - beta * frame.grad_phi_of(q)
    return v, q, StageReport(rep.iterations, rep.residual)


# ---- explicit part -------------------------------------------------------------

def surface_velocity(v: np.ndarray, frame: DiffeoFrame) -> np.ndarray:
    """``d_t h = v . N`` at z = 0."""
    return np.einsum("i...,i...->...", v[..., 0], frame.N[..., 0])


def explicit_rhs(v: np.ndarray, frame: DiffeoFrame, chi: CutoffProfile):
    """Moving-frame advection and the kinematic surface velocity."""
    g = frame.grid
    d = g.d
    dth = surface_velocity(v, frame)
    deta_t = extend_surface(SurfaceState(dth, g), chi, g)
    Vz = (np.einsum("i...,i...->...", v, frame.N) - deta_t) / frame.J
    adv = np.zeros_like(v)
    for c in range(d + 1):
        gr = g.grad(v[c])
        adv[c] = sum(v[a] * gr[a] for a in range(d)) + Vz * gr[d]
    return -adv, dth


# ---- stepper --------------------------------------------------------------------

class Stepper:
    """Second-order IMEX stepper; caches flat preconditioners per ``dt``."""

    def __init__(self, phys: Physics, tol: float = 1e-11, dump_dir: str | Path | None = None):
        self.phys = phys
        self.tol = tol
        self.dump_dir = dump_dir
        self._pc = {}
        self.last_reports: list[StageReport] = []
        self.last_pressure: np.ndarray | None = None
        self.last_frame: DiffeoFrame | None = None

    def _precond(self, grid, A, beta):
        key = (grid.ny, grid.nz, grid.d, grid.L, grid.H, A, beta, self.phys.eps)
        if key not in self._pc:
            if self.phys.eps > 0:
                self._pc[key] = FlatStokesPreconditioner(grid, A, beta, self.phys.eps)
            else:
                self._pc[key] = FlatPoissonPreconditioner(grid, A, "neumann_zero")
            if len(self._pc) > 4:
                self._pc.pop(next(iter(self._pc)))
        return self._pc[key]

    def _implicit(self, frame, beta, r, h_stage):
        pc = self._precond(frame.grid, frame.A, beta)
        g_h = self.phys.g * h_stage
        if self.phys.eps > 0:
            return solve_stokes_stage(frame, beta, self.phys.eps, r, g_h, pc, self.tol)
        return solve_projection_stage(frame, beta, r, g_h, pc, self.tol)

    def step(self, state: FlowState, dt: float) -> FlowState:
        phys = self.phys
        grid, A, chi = state.grid, state.A, phys.chi
        beta = _GAM * dt
        if not _finite(state):
            self._halt(state, f"non-finite input state at t = {state.t:.6g}", state.t)
        fr1 = state.frame(phys)
        Ev1, Eh1 = explicit_rhs(state.v, fr1, chi)

        h2 = state.h + dt * _GAM * Eh1
        fr2 = assemble_frame(SurfaceState(h2, grid), A, chi, grid, phys.c0)
        r2 = state.v + dt * _GAM * Ev1
        v2, _, rep2 = self._implicit(fr2, beta, r2, h2)
        G2 = (v2 - r2) / beta
        Ev2, Eh2 = explicit_rhs(v2, fr2, chi)

        h3 = state.h + dt * (_DEL * Eh1 + (1 - _DEL) * Eh2)
        fr3 = assemble_frame(SurfaceState(h3, grid), A, chi, grid, phys.c0)
        r3 = state.v + dt * (_DEL * Ev1 + (1 - _DEL) * Ev2) + dt * (1 - _GAM) * G2
        v3, q3, rep3 = self._implicit(fr3, beta, r3, h3)
        self.last_reports = [rep2, rep3]
        self.last_pressure = q3
        self.last_frame = fr3
        new = state.copy(v=v3, h=h3, t=state.t + dt)
        if not _finite(new):
            self._halt(state, f"non-finite state at t = {new.t:.6g}", new.t)
        return new

    def _halt(self, state, message, t):
        path = None
        if self.dump_dir is not None:
            path = Path(self.dump_dir) / f"blowup_t{state.t:.6f}.chk"
            write_checkpoint(path, state, self.phys.eps)
        raise NumericalBlowup(message, dump_path=path, t=t)


def _finite(state: FlowState) -> bool:
    return bool(np.all(np.isfinite(state.v)) and np.all(np.isfinite(state.h)))


def step(state: FlowState, dt: float, phys: Physics, stepper: Stepper | None = None) -> FlowState:
    return (stepper or Stepper(phys)).step(state, dt)


# ---- stability, energy, divergence -----------------------------------------------

#: safety factors of the two stability bounds
CFL_GRAVITY = 1.0
CFL_ADVECTIVE = 1.0


def cfl_limit(state: FlowState, g: float = 1.0) -> float:
    """``min(CFL_GRAVITY / omega_max, CFL_ADVECTIVE * dy / |U|, CFL_ADVECTIVE * dz_min / |v_z|)``.

    ``omega_max = sqrt(g k_max tanh(k_max H))`` is the fastest resolved gravity wave
    (``k_max`` the largest differentiated wavenumber); ``dy = L / ny`` and ``dz_min`` is the
    smallest physical Chebyshev spacing.
    """
    grid = state.grid
    kmax = max(float(np.abs(k).max()) for k in grid.deriv_wavenumbers)
    omega = np.sqrt(g * kmax * np.tanh(kmax * grid.H))
    dt = CFL_GRAVITY / omega if omega > 0 else np.inf
    U = float(np.abs(state.v[: grid.d]).max())
    if U > 0:
        dt = min(dt, CFL_ADVECTIVE * grid.dy / U)
    W = float(np.abs(state.v[grid.d]).max())
    if W > 0:
        dz = float(np.abs(np.diff(grid.z)).min()) * state.A
        dt = min(dt, CFL_ADVECTIVE * dz / W)
    return float(dt)


def divergence_residual(state: FlowState, phys: Physics, frame: DiffeoFrame | None = None) -> float:
    """``L^2`` norm of ``div(P v) / d_z phi``."""
    frame = frame or state.frame(phys)
    return float(state.grid.l2(frame.div_phi(state.v)))


@dataclass
class EnergyLedger:
    """Running energy balance; ``residual`` is relative to the initial total when that is nonzero."""

    g: float
    eps: float
    kinetic: float = 0.0
    potential: float = 0.0
    dissipation_integral: float = 0.0
    initial_total: float | None = None
    residual: float = 0.0
    t: float = 0.0
    _last_rate: float = 0.0
    history: list = field(default_factory=list)

    @property
    def total(self) -> float:
        return self.kinetic + self.potential


def _dissipation_rate(v, frame, eps):
    if eps == 0:
        return 0.0
    S = frame.strain(v)
    return 4.0 * eps * frame.volume_integral(np.sum(S**2, axis=(0, 1)))


def energy_audit(state: FlowState, ledger: EnergyLedger, frame: DiffeoFrame | None = None,
                 phys: Physics | None = None) -> EnergyLedger:
    """Update ``ledger`` with the quadratures at ``state``; dissipation in time by the trapezoid rule."""
    if frame is None:
        frame = state.frame(phys or Physics(g=ledger.g, eps=ledger.eps))
    kin = frame.volume_integral(np.sum(state.v**2, axis=0))
    pot = ledger.g * state.grid.bintegrate(state.h**2)
    rate = _dissipation_rate(state.v, frame, ledger.eps)
    if ledger.initial_total is None:
        ledger.initial_total = kin + pot
    else:
        ledger.dissipation_integral += 0.5 * (state.t - ledger.t) * (ledger._last_rate + rate)
    ledger.kinetic, ledger.potential, ledger._last_rate, ledger.t = kin, pot, rate, state.t
    raw = kin + pot + ledger.dissipation_integral - ledger.initial_total
    ledger.residual = raw / ledger.initial_total if ledger.initial_total > 0 else raw
    ledger.history.append((state.t, kin, pot, ledger.dissipation_integral, ledger.residual))
    return ledger


def dynamic_bc_defect(state: FlowState, phys: Physics, q: np.ndarray | None = None,
                      frame: DiffeoFrame | None = None):
    """Boundary ``L^2`` norms of ``Pi S v n`` and (with ``q``) of ``q - 2 eps S v n . n - g h`` at z = 0."""
    frame = frame or state.frame(phys)
    g = state.grid
    S = frame.strain(state.v)[..., 0]
    n = frame.n[..., 0]
    Sn = np.einsum("ij...,j...->i...", S, n)
    nSn = np.einsum("i...,i...->...", n, Sn)
    tang = Sn - n * nSn
    t_def = float(np.sqrt(sum(g.bl2(c) ** 2 for c in tang)))
    if q is None:
        return t_def, None
    return t_def, float(g.bl2(q[..., 0] - 2.0 * phys.eps * nSn - phys.g * state.h))


# ---- checkpoints ------------------------------------------------------------------

CHECKPOINT_MAGIC = b"FSCK"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIIII5d")


def write_checkpoint(path, state: FlowState, eps: float) -> Path:
    """Header ``<4sIIII5d`` (magic, version, ny, nz, d, H, L, eps, t, A), then v and h as ``<f8``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    g = state.grid
    head = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, g.ny, g.nz, g.d,
                        g.H, g.L, eps, state.t, state.A)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(state.v, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.h, dtype="<f8").tobytes())
    return path


def read_checkpoint(path):
    """Returns ``(FlowState, eps)``."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated checkpoint header")
    magic, ver, ny, nz, d, H, L, eps, t, A = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC or ver != CHECKPOINT_VERSION:
        raise ValueError(f"not a version {CHECKPOINT_VERSION} checkpoint")
    grid = StripGrid(ny=ny, nz=nz, L=L, H=H, d=d)
    nv = (d + 1) * int(np.prod(grid.shape))
    nh = int(np.prod(grid.hshape))
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != nv + nh:
        raise ValueError(f"checkpoint body has {body.size} values, expected {nv + nh}")
    v = body[:nv].reshape((d + 1,) + grid.shape).astype(float)
    h = body[nv:].reshape(grid.hshape).astype(float)
    return FlowState(v, h, grid, A, t), eps
