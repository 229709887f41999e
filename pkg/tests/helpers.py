"""Shared test fixtures: frames with closed-form metrics, built symbolically."""
import numpy as np
import sympy as sp

from freesurf.geometry import DiffeoFrame

Y1, Y2, Z = sp.symbols("y1 y2 z", real=True)


def coords(d):
    return (Y1, Z) if d == 1 else (Y1, Y2, Z)


def evaluate(expr, grid):
    """Evaluate a sympy expression in (y.., z) on the grid mesh."""
    syms = coords(grid.d)
    f = sp.lambdify(syms, expr, "numpy")
    return np.broadcast_to(np.asarray(f(*grid.mesh()), dtype=float), grid.shape).copy()


def analytic_frame(grid, eta_expr, A=1.0, c0=0.1):
    """A frame whose ``eta`` and its derivatives are given exactly (not via the extension)."""
    syms = coords(grid.d)
    d = grid.d
    eta = evaluate(eta_expr, grid)
    grad = np.stack([evaluate(sp.diff(eta_expr, s), grid) for s in syms])
    hess = np.stack([np.stack([evaluate(sp.diff(eta_expr, a, b), grid) for b in syms]) for a in syms])
    h = eta[..., 0]
    return DiffeoFrame(grid=grid, A=float(A), h=h, eta=eta, grad_eta=grad, hess_eta=hess, c0=c0)


def phi_derivative(expr, i, eta_expr, A, d):
    """Symbolic ``d_i^phi`` for ``phi = A z + eta`` (``i == d`` is vertical)."""
    syms = coords(d)
    phi = A * Z + eta_expr
    J = sp.diff(phi, Z)
    if i == d:
        return sp.diff(expr, Z) / J
    return sp.diff(expr, syms[i]) - sp.diff(phi, syms[i]) / J * sp.diff(expr, Z)
