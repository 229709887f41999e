import math

import numpy as np
import pytest
import sympy as sp

from freesurf import function_spaces as fs
from freesurf.diagnostics import (CSV_COLUMNS, MonitorSeries, good_unknown, layer_width, qm_terms, s_n,
                                  taylor_min, taylor_series, vorticity)
from freesurf.geometry import SurfaceState, flat_frame
from freesurf.grid import StripGrid

from helpers import Y1, Z, analytic_frame, evaluate


def sym_z(expr, alpha):
    a1, a3 = alpha
    for _ in range(a3):
        expr = Z / (1 - Z) * sp.diff(expr, Z)
    return sp.diff(expr, Y1, a1) if a1 else expr


def test_good_unknown_matches_symbolic_oracle():
    g = StripGrid(ny=32, nz=32, H=2.0)
    eta = sp.Rational(1, 20) * sp.cos(Y1) * sp.exp(Z)
    fr = analytic_frame(g, eta)
    vs = [sp.sin(Y1) * sp.exp(Z) * sp.cos(Z), sp.cos(2 * Y1) * sp.exp(2 * Z)]
    v = np.stack([evaluate(e, g) for e in vs])
    G = good_unknown(v, fr, 3)
    J = 1 + sp.diff(eta, Z)
    for alpha in [(0, 0), (1, 0), (0, 2), (2, 1), (1, 2)]:
        for c, vc in enumerate(vs):
            exact = sym_z(vc, alpha) - sp.diff(vc, Z) / J * sym_z(eta, alpha) if sum(alpha) else vc
            assert np.abs(G[alpha][c] - evaluate(exact, g)).max() < 1e-8, alpha


def test_good_unknown_flat_reduces_to_conormal_derivatives():
    g = StripGrid(ny=16, nz=12)
    fr = flat_frame(g)
    rng = np.random.default_rng(0)
    v = rng.standard_normal((2,) + g.shape)
    G = good_unknown(v, fr, 2)
    assert np.array_equal(G[(0, 0)], v)
    for alpha, V in G.fields.items():
        for c in range(2):
            assert np.allclose(V[c], fs.z_alpha(v[c], alpha, g), atol=1e-12)
        if alpha[-1] > 0:
            assert np.all(V[..., 0] == 0)


def test_s_n_vanishes_for_rest_and_translation():
    g = StripGrid(ny=16, nz=12)
    fr = flat_frame(g)
    assert not s_n(np.zeros((2,) + g.shape), fr).any()
    v = np.zeros((2,) + g.shape)
    v[0] = 0.3
    assert np.abs(s_n(v, fr)).max() < 1e-13


def test_vorticity_of_shear_and_potential_flow():
    g = StripGrid(ny=16, nz=24, H=2.0)
    fr = flat_frame(g, A=1.5)
    _, Zm = g.mesh()
    v = np.stack([np.sin(Zm), np.zeros(g.shape)])
    om, _ = vorticity(v, fr)
    assert np.allclose(om, -np.cos(Zm) / 1.5, atol=1e-10)
    # potential flow: irrotational and divergence free
    Y, Zm = g.mesh()
    phi = np.cos(Y) * np.cosh(1.5 * (Zm + 2))
    v = fr.grad_phi_of(phi)
    om, ident = vorticity(v, fr)
    assert np.abs(om).max() < 1e-9 and np.abs(ident).max() < 1e-9


def test_layer_width_synthetic_profiles():
    g = StripGrid(ny=8, nz=96, H=2.0)
    Y, Zm = g.mesh()
    v0 = np.stack([np.cos(Y) * np.exp(Zm), np.zeros(g.shape)])
    assert math.isnan(layer_width(v0, v0, g))
    for eps in (1e-2, 1e-3):
        r = math.sqrt(eps)
        ve = v0.copy()
        ve[0] = ve[0] + r * np.exp(Zm / r)
        assert layer_width(ve, v0, g) == pytest.approx(r, rel=1e-3)


def test_taylor_series_rest_state():
    g = StripGrid(ny=16, nz=16)
    fr = flat_frame(g)
    v = np.zeros((2,) + g.shape)
    series = taylor_series([(v, fr)] * 3, g=2.0)
    assert np.allclose(series, 2.0)


def test_taylor_value_reported_when_negative():
    g = StripGrid(ny=16, nz=16, H=2.0)
    fr = flat_frame(g)
    Y, Zm = g.mesh()
    v = 5.0 * np.stack([np.sin(Y) * np.cos(Zm), -np.cos(Y) * np.sin(Zm)])  # cellular vortex
    assert taylor_min(v, fr, g=0.01) < 0  # reported, not raised


def test_qm_terms_and_monitor_series():
    g = StripGrid(ny=16, nz=16, H=4.0)
    h = SurfaceState.single_mode(g, 1, 1e-3)
    fr = flat_frame(g)
    v = np.zeros((2,) + g.shape)
    t = qm_terms(v, fr, 0.01, 4)
    assert t["Vm_norm"] == 0 and t["Sn_m2"] == 0
    mon = MonitorSeries(0.01, m=4)
    for tt in (0.0, 0.5, 1.0):
        row = mon.record(tt, v, fr)
    assert set(CSV_COLUMNS) <= set(row)
    assert mon.dzv_l4 == 0 and np.all(mon.column("t") == [0, 0.5, 1.0])
    assert fs.boundary_norm(h, 4) ** 2 < 1
