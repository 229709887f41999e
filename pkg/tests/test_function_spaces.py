import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freesurf import function_spaces as fs
from freesurf.geometry import SurfaceState
from freesurf.grid import StripGrid


def test_boundary_norm_single_mode_closed_form():
    g = StripGrid(ny=64, nz=8)
    for k, a, s in [(1, 1.0, 0), (3, 0.5, 2), (5, 2.0, 1.5)]:
        h = SurfaceState.single_mode(g, k, a)
        exact = a * math.sqrt(g.L / 2) * (1 + k**2) ** (s / 2)
        assert fs.boundary_norm(h, s) == pytest.approx(exact, rel=1e-12)


def test_boundary_norm_zero_mode_and_array_input():
    g = StripGrid(ny=16, nz=8)
    h = np.full(g.hshape, 2.0)
    assert fs.boundary_norm(h, 3, g) == pytest.approx(2 * math.sqrt(g.L))


@given(s1=st.floats(0, 4), s2=st.floats(0, 4), k=st.integers(0, 7))
def test_boundary_norm_monotone_in_s(s1, s2, k):
    g = StripGrid(ny=16, nz=4)
    h = SurfaceState.single_mode(g, k, 1.0)
    lo, hi = sorted((s1, s2))
    assert fs.boundary_norm(h, lo) <= fs.boundary_norm(h, hi) * (1 + 1e-12)


def test_z3_vanishes_on_surface():
    g = StripGrid(ny=8, nz=16)
    Y, Zm = g.mesh()
    f = np.cos(Y) * np.exp(Zm)
    z3 = fs.conormal_derivative(f, 3, g)
    assert np.all(z3[..., 0] == 0)
    assert np.allclose(z3, Zm / (1 - Zm) * f, atol=1e-10)
    with pytest.raises(IndexError):
        fs.conormal_derivative(f, 2, g)


def test_multi_indices_count():
    assert len(fs.multi_indices(4, 1)) == 15
    assert len(fs.multi_indices(3, 2)) == 20
    assert all(sum(a) <= 4 for a in fs.multi_indices(4, 2))


def test_all_z_alpha_matches_single_evaluation():
    g = StripGrid(ny=16, nz=12)
    Y, Zm = g.mesh()
    f = np.sin(2 * Y) * np.exp(Zm) + np.cos(Y) * Zm**3
    allz = fs.all_z_alpha(f, 3, g)
    for a in fs.multi_indices(3, 1):
        assert np.allclose(allz[a], fs.z_alpha(f, a, g), atol=1e-10)


def test_conormal_norm_closed_form():
    # f = cos(k y) c: Z_1^j f has L^2 norm k^j |c| sqrt(pi H); Z_3 f = 0
    g = StripGrid(ny=32, nz=8, H=2.0)
    Y, _ = g.mesh()
    k = 2
    f = 3.0 * np.cos(k * Y)
    m = 3
    exact = 3.0 * math.sqrt(math.pi * g.H) * math.sqrt(sum(k ** (2 * j) for j in range(m + 1)))
    assert fs.conormal_norm(f, m, g) == pytest.approx(exact, rel=1e-10)
    assert fs.conormal_norm(f, -1, g) == 0.0


def test_em_norms_and_sup():
    g = StripGrid(ny=16, nz=16, H=1.0)
    Y, Zm = g.mesh()
    f = np.cos(Y) * Zm
    assert fs.em_norm(f, 2, g) >= fs.conormal_norm(f, 2, g)
    # sup norm of m = 0 is the max
    assert fs.conormal_sup_norm(f, 0, g) == pytest.approx(np.abs(f).max())
    assert fs.em_sup_norm(f, 1, g) > fs.conormal_sup_norm(f, 1, g)


def test_depth_window():
    g = StripGrid(ny=8, nz=32, H=4.0)
    w = fs.depth_window(g)
    assert np.all(w[g.z >= -2.0] == 1.0) and np.all(w[g.z <= -3.0] == 0.0)
    Y, Zm = g.mesh()
    f = np.cos(Y) * np.exp(Zm)
    assert fs.conormal_norm(f, 2, g, w) < fs.conormal_norm(f, 2, g)


def test_anisotropic_weight():
    assert fs.anisotropic_weight(1.0, 0.0, 0.0, 0.5) == pytest.approx(1.0)
    assert fs.anisotropic_weight(1.0, 0.0, 2.0, 0.25) == pytest.approx(2 ** 0.25)
    with pytest.raises(ValueError):
        fs.anisotropic_weight(0.5, 0, 0, 0.1)
    with pytest.raises(ValueError):
        fs.anisotropic_weight(1.0, 0, 0, 0.0)


@given(gamma=st.floats(1, 100), tau=st.floats(-100, 100), xi=st.floats(0, 100), eps=st.floats(1e-4, 1))
def test_anisotropic_weight_bounds(gamma, tau, xi, eps):
    w = fs.anisotropic_weight(gamma, tau, xi, eps)
    assert w >= math.sqrt(gamma) * (1 - 1e-12)
    assert w <= (gamma + abs(tau) + eps * xi**2) ** 0.5 * (1 + 1e-12)


def test_embedding_ratio_finite():
    g = StripGrid(ny=16, nz=16)
    Y, Zm = g.mesh()
    f = np.cos(Y) * np.exp(Zm)
    r = fs.embedding_ratio(f, g)
    assert 0 < r < 10


def test_norm_report():
    g = StripGrid(ny=16, nz=8)
    Y, Zm = g.mesh()
    rep = fs.norm_report(np.cos(Y) * Zm, g, 2, h=np.cos(g.y))
    assert set(rep.values) == {"H^2_co", "E^2", "W^{1,inf}_co", "|h|_2"}
    assert rep.row(["E^2"]) == [rep["E^2"]]
    with pytest.raises(ValueError):
        fs.NormReport({"x": float("nan")})
    with pytest.raises(ValueError):
        fs.NormReport({"x": -1.0})
