import numpy as np
import pytest
from hypothesis import given, strategies as st

from freesurf.grid import StripGrid, cheb, clenshaw_curtis, interp_matrix, lagrange_diff_matrix


@pytest.mark.parametrize("n", [4, 9, 16, 33])
def test_cheb_differentiates_polynomials_exactly(n):
    D, x = cheb(n)
    p = np.polynomial.Polynomial(np.arange(1, n + 1, dtype=float))
    assert np.allclose(D @ p(x), p.deriv()(x), atol=1e-9 * n**2)


@pytest.mark.parametrize("n", [4, 7, 16, 32])
def test_clenshaw_curtis_integrates_polynomials(n):
    w = clenshaw_curtis(n)
    x = cheb(n)[1]
    for k in range(n + 1):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert w @ x**k == pytest.approx(exact, abs=1e-13)


def test_interp_and_lagrange_matrices():
    x = cheb(10)[1]
    xe = np.linspace(-1, 1, 17)
    f = lambda t: t**7 - 2 * t**3 + 1
    assert np.allclose(interp_matrix(x, xe) @ f(x), f(xe), atol=1e-12)
    xi = x[1:-1]
    assert np.allclose(lagrange_diff_matrix(xi) @ f(xi), 7 * xi**6 - 6 * xi**2, atol=1e-10)


def test_grid_orientation_and_integrals():
    g = StripGrid(ny=16, nz=12, H=3.0)
    assert g.z[0] == 0.0 and g.z[-1] == pytest.approx(-3.0)
    Y, Zm = g.mesh()
    assert g.integrate(np.ones(g.shape)) == pytest.approx(g.L * g.H)
    assert g.integrate(Zm**2) == pytest.approx(g.L * 9.0)
    assert g.l2(np.cos(Y)) == pytest.approx(np.sqrt(np.pi * g.H))


@given(k=st.integers(1, 6), p=st.integers(0, 8))
def test_spectral_derivatives_exact(k, p):
    g = StripGrid(ny=16, nz=10, H=2.0)
    Y, Zm = g.mesh()
    f = np.sin(k * Y) * Zm**p
    assert np.allclose(g.dh(f, 0), k * np.cos(k * Y) * Zm**p, atol=1e-10)
    df = p * Zm ** max(p - 1, 0) * np.sin(k * Y) if p else 0 * f
    assert np.allclose(g.dz(f), df, atol=1e-9)


def test_validation():
    with pytest.raises(ValueError):
        StripGrid(ny=12)
    with pytest.raises(ValueError):
        StripGrid(d=3)
    with pytest.raises(ValueError):
        StripGrid(nz=2)


def test_three_dimensional_grid_div_grad():
    g = StripGrid(ny=8, nz=6, d=2)
    Y1, Y2, Zm = g.mesh()
    f = np.cos(Y1) * np.sin(2 * Y2) * Zm**2
    lap = g.div(g.grad(f))
    assert np.allclose(lap, (-5 * Zm**2 + 2) * np.cos(Y1) * np.sin(2 * Y2), atol=1e-10)
