import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riemann_deform.grid import PolarGrid, fd_weights, radial_weights
from riemann_deform.rhsolver import dbar_operator


def test_fd_weights_central():
    assert np.allclose(fd_weights([-1, 0, 1], 1), [-0.5, 0, 0.5])
    assert np.allclose(fd_weights([-1, 0, 1], 2), [1, -2, 1])


@settings(max_examples=20, deadline=None)
@given(st.integers(8, 40), st.integers(0, 7))
def test_radial_weights_exact_below_order(n, degree):
    r = np.linspace(0, 1, n + 1)
    assert radial_weights(n) @ r**degree == pytest.approx(1 / (degree + 1), abs=1e-12)


def test_layout(grid16):
    g = grid16
    assert g.size == 1 + 16 * 64
    assert np.allclose(g.r[g.boundary], 1.0)
    assert np.allclose(g.theta[g.boundary], g.boundary_theta)
    assert g.nearest([0.0, 0.0]) == 0
    assert g.nearest([1.0, 0.0]) == g.boundary[0]
    assert str(PolarGrid.parse("12x48")) == "12x48"


@pytest.mark.parametrize("args", [(4, 64), (16, 63), (16, 8)])
def test_invalid_grids(args):
    with pytest.raises(ValueError):
        PolarGrid(*args)


def test_disk_integrals(grid16):
    w = grid16.weights
    x, y = grid16.x.T
    assert w.sum() == pytest.approx(np.pi, abs=1e-12)
    assert w @ (x**2 + y**2) == pytest.approx(np.pi / 2, abs=1e-12)
    assert w @ (x**4) == pytest.approx(np.pi / 8, abs=1e-12)


@pytest.mark.parametrize("p,q", [(0, 0), (1, 0), (0, 1), (2, 1), (1, 3), (2, 2)])
def test_polynomial_derivatives(grid16, p, q):
    g = grid16
    x, y = g.x.T
    f = x**p * y**q
    fx = p * x**max(p - 1, 0) * y**q
    fy = q * x**p * y**max(q - 1, 0)
    fxx = p * (p - 1) * x**max(p - 2, 0) * y**q
    fxy = p * q * x**max(p - 1, 0) * y**max(q - 1, 0)
    fyy = q * (q - 1) * x**p * y**max(q - 2, 0)
    # radial stencils are exact here; angular modes k >= 3 leave (k dtheta)^8 truncation
    tol = 1e-10 if p + q < 3 else 1e-6
    assert np.abs(g.grad(f) - np.stack([fx, fy], axis=1)).max() < tol
    assert np.abs(g.hessian(f) - np.stack([fxx, fxy, fyy], axis=1)).max() < 20 * tol


def _dbar_residual(grid, k):
    z = grid.x[:, 0] + 1j * grid.x[:, 1]
    w = z**k
    out = dbar_operator(grid) @ np.concatenate([w.real, w.imag])
    return np.abs(out).max()


@pytest.mark.parametrize("k", range(5))
def test_dbar_annihilates_powers(k):
    # h^2 bound with a generous constant; the 8th-order stencils do far better
    for grid in (PolarGrid(8, 32), PolarGrid(16, 64)):
        assert _dbar_residual(grid, k) <= 1.0 * grid.h**2


def test_smooth_function_converges():
    f = lambda x: np.exp(x[:, 0]) * np.cos(2 * x[:, 1])
    errs = []
    for g in (PolarGrid(8, 32), PolarGrid(16, 64)):
        exact = np.exp(g.x[:, 0]) * -4 * np.cos(2 * g.x[:, 1])
        errs.append(np.abs(g.hessian(f(g.x))[:, 2] - exact).max())
    assert errs[1] < errs[0] / 4
