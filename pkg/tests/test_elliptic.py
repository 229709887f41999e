import numpy as np
import pytest
import sympy as sp

from freesurf.elliptic import (EllipticNonConvergence, EllipticProblem, EllipticSetupError,
                               FlatPoissonPreconditioner, apply_operator, check_positive, euler_rhs,
                               normal_stress, pressure_euler, pressure_ns, pressure_pair, residual_norm,
                               solve_dirichlet)
from freesurf.geometry import CutoffProfile, SurfaceState, assemble_frame, choose_A, flat_frame
from freesurf.grid import StripGrid

from helpers import Y1, Z, analytic_frame, evaluate


def _manufactured(A=1.0):
    eta = sp.Rational(1, 10) * sp.cos(Y1) * sp.exp(Z)
    phi = A * Z + eta
    J, py = sp.diff(phi, Z), sp.diff(phi, Y1)
    rho = (Z + 2) * (sp.sin(Y1) * sp.exp(Z) * sp.cos(3 * Z) + sp.cos(2 * Y1) * sp.sin(Z) / 3)
    P = sp.Matrix([[J, 0], [-py, 1]])
    F = (P * P.T / J) * sp.Matrix([sp.diff(rho, Y1), sp.diff(rho, Z)])
    return eta, rho, -(sp.diff(F[0], Y1) + sp.diff(F[1], Z))


def manufactured_errors(ns=(4, 8, 16, 32)):
    eta, rho, rhs = _manufactured()
    errs = []
    for n in ns:
        g = StripGrid(ny=n, nz=n, H=2.0)
        fr = analytic_frame(g, eta)
        ex = evaluate(rho, g)
        prob = EllipticProblem(E=fr.E, top=ex[..., 0], rhs=evaluate(rhs, g))
        sol, _ = solve_dirichlet(prob, g, 1.0, tol=1e-13)
        errs.append(g.l2(sol - ex))
    return errs


def test_manufactured_solution_converges_spectrally():
    errs = manufactured_errors()
    assert errs[-1] < 1e-10
    for a, b in zip(errs, errs[1:]):
        if b > 1e-10:
            assert a / b >= 8


@pytest.mark.parametrize("A", [1.0, 1.5])
@pytest.mark.parametrize("bottom", ["dirichlet_zero", "neumann_zero"])
def test_flat_sinh_closed_forms(A, bottom):
    g = StripGrid(ny=16, nz=32, H=2.0)
    fr = flat_frame(g, A)
    Y, Zm = g.mesh()
    k = 2
    prob = EllipticProblem(E=fr.E, top=np.cos(k * g.y), rhs=np.zeros(g.shape), bottom=bottom)
    sol, rep = solve_dirichlet(prob, g, A)
    s = k * A
    if bottom == "dirichlet_zero":
        exact = np.cos(k * Y) * np.sinh(s * (Zm + g.H)) / np.sinh(s * g.H)
    else:
        exact = np.cos(k * Y) * np.cosh(s * (Zm + g.H)) / np.cosh(s * g.H)
    assert np.abs(sol - exact).max() <= 1e-8
    assert rep.iterations <= 3


def test_flat_preconditioner_is_exact_inverse():
    g = StripGrid(ny=8, nz=12)
    fr = flat_frame(g, 1.2)
    pc = FlatPoissonPreconditioner(g, 1.2, "dirichlet_zero")
    x = np.random.default_rng(0).standard_normal(g.shape)
    prob = EllipticProblem(E=fr.E, top=np.zeros(g.hshape), rhs=np.zeros(g.shape))
    assert np.allclose(pc(apply_operator(prob, g, x)), x, atol=1e-10)


def test_divergence_form_rhs_and_residual():
    g = StripGrid(ny=16, nz=16)
    h = SurfaceState.single_mode(g, 1, 0.05)
    fr = assemble_frame(h, choose_A(h, CutoffProfile()), CutoffProfile())
    Y, Zm = g.mesh()
    F = np.stack([np.sin(Y) * np.exp(Zm), np.cos(Y) * Zm])
    prob = EllipticProblem(E=fr.E, top=np.cos(g.y), F=F, bottom="neumann_zero")
    sol, rep = solve_dirichlet(prob, g, fr.A, tol=1e-12)
    assert rep.residual <= 1e-12
    assert residual_norm(prob, g, sol) < 1e-7 * max(1.0, np.abs(sol).max())


def test_setup_errors():
    g = StripGrid(ny=8, nz=8)
    fr = flat_frame(g)
    with pytest.raises(EllipticSetupError):
        EllipticProblem(E=fr.E, top=np.zeros(g.hshape))
    with pytest.raises(EllipticSetupError):
        EllipticProblem(E=fr.E, top=np.zeros(g.hshape), rhs=np.zeros(g.shape), bottom="robin")
    with pytest.raises(EllipticSetupError):
        check_positive(-fr.E)


def test_nonconvergence_raises():
    g = StripGrid(ny=16, nz=16)
    h = SurfaceState.single_mode(g, 2, 0.1)
    fr = assemble_frame(h, choose_A(h, CutoffProfile()), CutoffProfile())
    prob = EllipticProblem(E=fr.E, top=np.cos(g.y), rhs=np.ones(g.shape))
    with pytest.raises(EllipticNonConvergence) as info:
        solve_dirichlet(prob, g, fr.A, tol=1e-30, max_iter=1)
    assert info.value.residual > 0


def test_zero_data_gives_zero():
    g = StripGrid(ny=8, nz=8)
    fr = flat_frame(g)
    sol, rep = solve_dirichlet(EllipticProblem(E=fr.E, top=np.zeros(g.hshape), rhs=np.zeros(g.shape)), g)
    assert not sol.any() and rep.iterations == 0


def test_rest_state_pressure_is_hydrostatic_free():
    g = StripGrid(ny=16, nz=16)
    fr = flat_frame(g)
    v = np.zeros((2,) + g.shape)
    qE, taylor, _ = pressure_euler(v, fr, g=9.81)
    assert np.allclose(qE, 0) and np.allclose(taylor, 9.81)
    qNS, _ = pressure_ns(v, fr, 0.1)
    assert not qNS.any()


def test_euler_rhs_of_linear_shear_flow():
    # v = (z, 0) in the flat frame: d_j v_i d_i v_j = 0
    g = StripGrid(ny=8, nz=8)
    fr = flat_frame(g)
    _, Zm = g.mesh()
    v = np.stack([Zm, np.zeros(g.shape)])
    assert np.allclose(euler_rhs(v, fr), 0, atol=1e-12)
    assert np.allclose(normal_stress(v, fr), 0, atol=1e-12)


def test_qns_linear_in_eps():
    g = StripGrid(ny=32, nz=24, H=2.0)
    h = SurfaceState.single_mode(g, 1, 0.02)
    fr = assemble_frame(h, choose_A(h, CutoffProfile()), CutoffProfile())
    Y, Zm = g.mesh()
    v = 0.01 * np.stack([np.cos(Y) * np.exp(Zm), np.sin(Y) * np.exp(Zm)])
    pair1 = pressure_pair(v, fr, 1e-2)
    pair2 = pressure_pair(v, fr, 1e-3)
    n1 = g.l2(fr.grad_phi_of(pair1.qNS))
    n2 = g.l2(fr.grad_phi_of(pair2.qNS))
    assert n1 / n2 == pytest.approx(10.0, rel=0.05)
    assert np.allclose(pair1.q, pair1.qE + pair1.qNS)
