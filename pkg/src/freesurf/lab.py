"""Drivers behind the command line: single runs, epsilon sweeps, kernel batches, norm reports."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels as K
from .config import RunConfig
from .diagnostics import CSV_COLUMNS, NULL_WIDTH, MonitorSeries, layer_width
from .dynamics import (EnergyLedger, FlowState, NumericalBlowup, Physics, Stepper, cfl_limit,
                       divergence_residual, energy_audit, linear_wave_velocity, write_checkpoint)
from .elliptic import EllipticNonConvergence
from .function_spaces import norm_report
from .geometry import CutoffProfile, DiffeomorphismBreakdown, SurfaceState, choose_A
from .grid import StripGrid

log = logging.getLogger(__name__)

BREAKDOWN = (NumericalBlowup, DiffeomorphismBreakdown, EllipticNonConvergence, FloatingPointError)


def fmt(x) -> str:
    """Shortest round-trip float text; CSV output is byte-stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return repr(float(x))


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])
    return path


def eps_tag(eps: float) -> str:
    return "0" if eps == 0 else format(eps, "g")


# ---- single run -----------------------------------------------------------------

def make_grid(cfg: RunConfig) -> StripGrid:
    g = cfg.grid
    return StripGrid(ny=g.ny, nz=g.nz, L=g.L, H=g.H, d=g.d)


def make_physics(cfg: RunConfig, eps: float) -> Physics:
    return Physics(g=cfg.physics.g, eps=eps, chi=CutoffProfile(cfg.chi.r1, cfg.chi.r2))


def initial_state(cfg: RunConfig, grid: StripGrid | None = None) -> FlowState:
    grid = grid or make_grid(cfg)
    ic = cfg.initial
    h0 = SurfaceState.single_mode(grid, ic.k, ic.a)
    if ic.noise > 0:
        rng = np.random.default_rng(cfg.seed)
        hh = grid.bfft(rng.standard_normal(grid.hshape))
        hh = hh * np.exp(-(grid.kabs**2) / 4.0)  # smooth, O(1) at low modes
        pert = grid.bifft(hh)
        h0 = SurfaceState(h0.h + ic.noise * ic.a * pert / np.abs(pert).max(), grid)
    chi = CutoffProfile(cfg.chi.r1, cfg.chi.r2)
    state = FlowState.at_rest(h0, chi)
    if ic.velocity == "linear":
        state = state.copy(v=linear_wave_velocity(grid, ic.k, ic.a, cfg.physics.g, state.A))
    return state


def time_step(cfg: RunConfig, state: FlowState) -> float:
    return cfg.physics.dt if cfg.physics.dt > 0 else cfg.physics.cfl * cfl_limit(state, cfg.physics.g)


@dataclass
class RunResult:
    eps: float
    status: str  # ok | breakdown
    state: FlowState
    monitor: MonitorSeries
    ledger: EnergyLedger
    steps: int
    dt: float
    error: str = ""
    snapshots: dict = field(default_factory=dict)  # record time index -> v
    flags: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def run_single(cfg: RunConfig, eps: float, dt: float | None = None, out_dir=None,
               keep_snapshots: bool = False) -> RunResult:
    """Advance one member to ``T``; breakdowns are caught and reported with the step index."""
    grid = make_grid(cfg)
    phys = make_physics(cfg, eps)
    state = initial_state(cfg, grid)
    dt = dt or time_step(cfg, state)
    nsteps = max(1, int(round(cfg.physics.T / dt)))
    stepper = Stepper(phys, tol=cfg.tol.solver, dump_dir=out_dir)
    ledger = EnergyLedger(phys.g, eps)
    monitor = MonitorSeries(eps, cfg.monitor.m, tuple(cfg.monitor.window))
    res = RunResult(eps, "ok", state, monitor, ledger, 0, dt)
    frame = state.frame(phys)

    def record(i, st, fr):
        div = divergence_residual(st, phys, fr)
        monitor.record(st.t, st.v, fr, phys.g, ledger.residual, div)
        if keep_snapshots:
            res.snapshots[len(monitor.rows) - 1] = st.v.copy()
        if i > 0 and div > cfg.tol.div:
            res.flags.append(f"step {i}: divergence residual {div:.2e} > {cfg.tol.div:.1e}")

    energy_audit(state, ledger, frame)
    record(0, state, frame)
    try:
        for i in range(1, nsteps + 1):
            state = stepper.step(state, dt)
            frame = stepper.last_frame
            energy_audit(state, ledger, frame)
            if i % cfg.monitor.every == 0 or i == nsteps:
                record(i, state, frame)
            res.steps = i
    except BREAKDOWN as exc:
        res.status = "breakdown"
        res.error = f"step {res.steps + 1} (t = {state.t:.6g}): {type(exc).__name__}: {exc}"
        log.error("eps=%s breakdown: %s", eps_tag(eps), res.error)
    res.state = state
    if out_dir is not None:
        write_run(res, out_dir, checkpoint=cfg.monitor.checkpoint)
    return res


def write_run(res: RunResult, out_dir, checkpoint=True):
    out = Path(out_dir)
    write_csv(out / f"diagnostics_eps{eps_tag(res.eps)}.csv", CSV_COLUMNS, res.monitor.rows)
    if checkpoint:
        write_checkpoint(out / f"final_eps{eps_tag(res.eps)}.chk", res.state, res.eps)


@dataclass
class DispersionResult:
    times: np.ndarray
    amplitude: np.ndarray  # cosine coefficient of h at wavenumber k
    crossings: np.ndarray
    period: float
    predicted: float

    @property
    def rel_error(self) -> float:
        return abs(self.period - self.predicted) / self.predicted


def linear_period(k: float, depth: float, g: float = 1.0) -> float:
    return 2 * math.pi / math.sqrt(g * k * math.tanh(k * depth))


def zero_crossings(t: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Linearly interpolated sign changes of ``a(t)``."""
    i = np.nonzero(np.signbit(a[:-1]) != np.signbit(a[1:]))[0]
    return t[i] - a[i] * (t[i + 1] - t[i]) / (a[i + 1] - a[i])


def run_dispersion(cfg: RunConfig, eps: float | None = None) -> DispersionResult:
    """Track the ``cos(k y)`` coefficient of ``h``; the period is a least-squares fit to its zero crossings."""
    eps = cfg.physics.eps[0] if eps is None else eps
    grid = make_grid(cfg)
    phys = make_physics(cfg, eps)
    state = initial_state(cfg, grid)
    dt = time_step(cfg, state)
    k = cfg.initial.k
    mode = np.cos(k * grid.y).reshape((-1,) + (1,) * (grid.d - 1))
    coef = lambda st: 2.0 * float(np.mean(st.h * mode))
    stepper = Stepper(phys, tol=cfg.tol.solver)
    ts, amps = [0.0], [coef(state)]
    for _ in range(max(1, int(round(cfg.physics.T / dt)))):
        state = stepper.step(state, dt)
        ts.append(state.t)
        amps.append(coef(state))
    t, a = np.array(ts), np.array(amps)
    cr = zero_crossings(t, a)
    period = 2.0 * np.polyfit(np.arange(cr.size), cr, 1)[0] if cr.size >= 2 else math.nan
    return DispersionResult(t, a, cr, float(period), linear_period(k, state.A * grid.H, cfg.physics.g))


# ---- sweep ------------------------------------------------------------------------

SWEEP_COLUMNS = ("eps", "status", "steps", "l2_distance", "l2_distance_sup", "linf_interior",
                 "layer_width", "qm_sup", "taylor_min", "h_m_final", "Vm_final", "dzv_l4",
                 "energy_residual")


@dataclass
class SweepReport:
    rows: list
    summary: dict
    partial: bool
    checks: dict

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def interior_mask(grid: StripGrid, eps: float, band: float = 4.0) -> np.ndarray:
    """Nodes outside the surface band ``z > -band sqrt(eps)``."""
    return grid.z <= -band * math.sqrt(eps)


def _member(args):
    cfg, eps, dt = args
    return run_single(cfg, eps, dt=dt, keep_snapshots=True)


def sweep_distances(ref: RunResult, res: RunResult, grid: StripGrid):
    """``L^2`` distance (final and sup over matched times), interior ``L^inf`` and layer width at T."""
    mask = interior_mask(grid, res.eps)
    l2 = []
    widths = []
    for idx, v in res.snapshots.items():
        v0 = ref.snapshots.get(idx)
        if v0 is None:
            continue
        l2.append(grid.l2(v - v0))
        widths.append((idx, layer_width(v, v0, grid)))
    dv = res.state.v - ref.state.v
    linf = float(np.abs(dv[..., mask]).max()) if mask.any() else math.nan
    return l2, linf, dict(widths)


def run_sweep(cfg: RunConfig, out_dir=None) -> SweepReport:
    """All members at the smallest common dt; distances measured against the eps = 0 member."""
    if 0.0 not in cfg.physics.eps:
        raise ValueError("the sweep needs eps = 0 as the Euler reference")
    grid = make_grid(cfg)
    dt = time_step(cfg, initial_state(cfg, grid))
    eps_list = [0.0] + [e for e in cfg.physics.eps if e > 0]
    jobs = [(cfg, e, dt) for e in eps_list]
    workers = max(1, min(cfg.workers, len(jobs), os.cpu_count() or 1))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_member, jobs))
    else:
        results = [_member(j) for j in jobs]
    by_eps = dict(zip(eps_list, results))
    ref = by_eps[0.0]
    rows = []
    for e in eps_list:
        res = by_eps[e]
        row = {"eps": e, "status": res.status, "steps": res.steps, "l2_distance": math.nan,
               "l2_distance_sup": math.nan, "linf_interior": math.nan, "layer_width": NULL_WIDTH,
               "qm_sup": res.monitor.qm_sup(), "taylor_min": float(res.monitor.column("taylor_min").min()),
               "h_m_final": res.monitor.rows[-1]["h_m"], "Vm_final": res.monitor.rows[-1]["Vm_norm"],
               "dzv_l4": res.monitor.dzv_l4, "energy_residual": res.ledger.residual}
        if e > 0 and res.ok and ref.ok:
            l2, linf, widths = sweep_distances(ref, res, grid)
            row.update(l2_distance=l2[-1], l2_distance_sup=max(l2), linf_interior=linf,
                       layer_width=widths.get(max(widths), NULL_WIDTH))
            for idx, w in widths.items():
                res.monitor.rows[idx]["layer_width"] = w
        rows.append(row)
        if out_dir is not None:
            write_run(res, out_dir, checkpoint=cfg.monitor.checkpoint)
    partial = not all(r.ok for r in results)
    visc = [r for r in rows if r["eps"] > 0]
    checks, summary = sweep_checks(visc, cfg.physics.g)
    report = SweepReport(rows, summary, partial, checks)
    if out_dir is not None:
        write_csv(Path(out_dir) / "sweep_report.csv", SWEEP_COLUMNS, rows)
        write_csv(Path(out_dir) / "sweep_summary.csv", ("quantity", "value"),
                  [{"quantity": k, "value": v} for k, v in list(summary.items()) + list(checks.items())])
    return report


def sweep_checks(visc_rows, g: float = 1.0):
    """Cross-eps summaries for rows ordered by decreasing eps."""
    l2 = [r["l2_distance"] for r in visc_rows]
    linf = [r["linf_interior"] for r in visc_rows]
    qm = [r["qm_sup"] for r in visc_rows]
    summary = {
        "l2_ratio_last_first": l2[-1] / l2[0] if l2 and l2[0] > 0 else math.nan,
        "qm_uniformity": max(qm) / qm[0] if qm else math.nan,
        "taylor_min": min(r["taylor_min"] for r in visc_rows) if visc_rows else math.nan,
    }
    widths = {r["eps"]: r["layer_width"] for r in visc_rows}
    for a, b in zip(visc_rows, visc_rows[1:]):
        wa, wb = widths[a["eps"]], widths[b["eps"]]
        summary[f"layer_ratio_{eps_tag(a['eps'])}_{eps_tag(b['eps'])}"] = wa / wb
    checks = {
        "l2_strictly_decreasing": all(b < a for a, b in zip(l2, l2[1:])),
        "linf_interior_decreasing": all(b < a for a, b in zip(linf, linf[1:])),
        "l2_final_reduction": summary["l2_ratio_last_first"] <= 0.1,
        "qm_uniform": summary["qm_uniformity"] <= 2.0,
        "taylor_positive": summary["taylor_min"] >= g / 2,
    }
    if 1e-2 in widths and 1e-3 in widths:
        r = widths[1e-2] / widths[1e-3]
        checks["layer_scaling"] = math.sqrt(10) / 1.5 <= r <= 1.5 * math.sqrt(10)
    return checks, summary


# ---- kernels ----------------------------------------------------------------------

@dataclass
class FamilyResult:
    family: str
    passed: bool
    constant: float
    detail: str


def _compact_bump_profile():
    """``z * exp(1 - 1/(1 - (z/3)^2))`` on ``|z| < 3``, zero outside; compactly supported."""

    def f0(z):
        z = np.asarray(z, dtype=float)
        u = (z / 3.0) ** 2
        out = np.zeros_like(z)
        m = u < 1
        out[m] = z[m] * np.exp(1.0 - 1.0 / (1.0 - u[m]))
        return out

    def df0(z):
        z = np.asarray(z, dtype=float)
        u = (z / 3.0) ** 2
        out = np.zeros_like(z)
        m = u < 1
        zm, um = z[m], u[m]
        e = np.exp(1.0 - 1.0 / (1.0 - um))
        out[m] = e * (1.0 - zm * (2 * zm / 9.0) / (1.0 - um) ** 2)
        return out

    return f0, df0


def heat_family(cfg: RunConfig, out: Path | None):
    kc = cfg.kernels
    rows = []
    try:
        g, t, x, e = K.heat_grid(kc.heat_n)
        g = kc.heat_gamma_min * g  # grid starts at gamma_min
        R = K.heat_trace_gain(g, t, x, e)
        spot1 = K.heat_trace_gain(1.0, 0.0, 0.0, 1.0)
        spot2 = K.heat_trace_gain(1.0, 1e12, 0.0, 1.0)
    except (K.KernelDomainError, AssertionError) as exc:
        return FamilyResult("heat", False, math.nan, f"{type(exc).__name__}: {exc}")
    ok = bool(np.all(R <= 1.0) and abs(spot1 - 0.5) <= 1e-6 and abs(spot2 - math.sqrt(0.5)) <= 1e-6)
    if out is not None:
        rows = [{"gamma": a, "tau": b, "xi": c, "eps": d, "R": r, "pass": r <= 1.0}
                for a, b, c, d, r in zip(g, t, x, e, R)]
        write_csv(out / "heat.csv", ("gamma", "tau", "xi", "eps", "R", "pass"), rows)
    return FamilyResult("heat", ok, float(R.max()),
                        f"{R.size} modes, max R {R.max():.6f}, spots {spot1:.8f} {spot2:.8f}")


def fp_family(cfg: RunConfig, out: Path | None):
    kc = cfg.kernels
    f0, df0 = _compact_bump_profile()
    z = np.linspace(-6.0, 0.0, 121)
    sup0 = float(np.abs(f0(np.linspace(-3, 0, 3001))).max())
    rows, ok, ratios = [], True, []
    try:
        for eps in kc.fp_eps:
            for t in kc.fp_times:
                r = K.fp_evolve(f0, kc.fp_drift, eps, t, 0.0, z, df0=df0, conormal=True)
                contraction = float(np.abs(r.g).max()) / sup0
                rows.append({"eps": eps, "t": t, "mass": r.mass, "linf_ratio": contraction,
                             "quad_error": r.quad_error, "pass": contraction <= 1 + 1e-12})
                ok &= contraction <= 1 + 1e-12
            c, _ = K.fp_conormal_bound(f0, kc.fp_drift, eps, kc.fp_times, z=z, df0=df0)
            ratios.append(c)
    except (K.KernelDomainError, K.QuadratureError) as exc:
        return FamilyResult("fp", False, math.nan, f"{type(exc).__name__}: {exc}")
    band = max(ratios) / min(ratios)
    ok = bool(ok and band <= 2.0)
    if out is not None:
        write_csv(out / "fp.csv", ("eps", "t", "mass", "linf_ratio", "quad_error", "pass"), rows)
    return FamilyResult("fp", ok, max(ratios),
                        "conormal constants " + " ".join(f"{c:.4f}" for c in ratios) + f", band {band:.3f}")


def symmetrizer_family(cfg: RunConfig, out: Path | None):
    kc = cfg.kernels
    cs = K.CompactSet(kc.sym_m, kc.sym_M, kc.sym_c0)
    try:
        pts = K.sample_points(kc.sym_n, cs, seed=cfg.seed)
        rep = K.select_delta(pts, kappa_min=kc.kappa_min)
    except K.SymmetrizerSearchError as exc:
        if out is not None:
            write_csv(out / "symmetrizer.csv", ("delta", "kappa", "n_points", "min_real_gap", "pass"),
                      [{"delta": math.nan, "kappa": math.nan, "n_points": kc.sym_n,
                        "min_real_gap": math.nan, "pass": False}])
        return FamilyResult("symmetrizer", False, math.nan, f"search failure: {exc}")
    if out is not None:
        write_csv(out / "symmetrizer.csv", ("delta", "kappa", "n_points", "min_real_gap", "pass"),
                  [{"delta": rep.delta, "kappa": rep.kappa, "n_points": rep.n_points,
                    "min_real_gap": rep.min_real_gap, "pass": True}])
    return FamilyResult("symmetrizer", True, rep.kappa,
                        f"delta {rep.delta:.4g}, kappa {rep.kappa:.4g} on {rep.n_points} points")


def hardy_family(cfg: RunConfig, out: Path | None):
    rows, ok, worst = [], True, 0.0
    for name, (f, df) in K.hardy_corpus().items():
        try:
            ratio, err = K.hardy_check(f, df)
            passed = True
        except AssertionError:
            ratio, err, passed = math.nan, math.nan, False
        ok &= passed
        worst = max(worst, ratio) if passed else worst
        rows.append({"profile": name, "ratio": ratio, "error": err, "pass": passed})
    if out is not None:
        write_csv(out / "hardy.csv", ("profile", "ratio", "error", "pass"), rows)
    return FamilyResult("hardy", bool(ok), worst, f"{len(rows)} profiles, max ratio {worst:.4f} (bound 4)")


def run_kernels(cfg: RunConfig, out_dir=None) -> list[FamilyResult]:
    out = Path(out_dir) if out_dir is not None else None
    results = [fam(cfg, out) for fam in (heat_family, fp_family, symmetrizer_family, hardy_family)]
    if out is not None:
        write_csv(out / "kernels_summary.csv", ("family", "passed", "constant", "detail"),
                  [r.__dict__ for r in results])
    return results


# ---- norms -------------------------------------------------------------------------

def run_norms(cfg: RunConfig, state: FlowState | None = None, out_dir=None):
    """Norm report of ``state`` (default: the configured initial data)."""
    state = state or initial_state(cfg)
    grid = state.grid
    rows = []
    for c in range(grid.d + 1):
        rep = norm_report(state.v[c], grid, cfg.monitor.m, h=state.h)
        rows.append({"component": c, **rep.values})
    if out_dir is not None:
        cols = ("component",) + tuple(k for k in rows[0] if k != "component")
        write_csv(Path(out_dir) / "norms.csv", cols, rows)
    return rows
