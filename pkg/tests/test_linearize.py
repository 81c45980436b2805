import numpy as np
import pytest
import scipy.sparse.linalg as spl

from riemann_deform.ambient import MetricField
from riemann_deform.grid import PolarGrid
from riemann_deform.linearize import (DeformationKind, DeformationProblem, LinearizationError,
                                      assemble_linear_system, boundary_coefficients,
                                      coefficient_report, complex_form_from_coefficients,
                                      fourier_series, smooth_direction, to_complex_form,
                                      translation_coefficients)
from riemann_deform.rhsolver import compute_index, from_linear_system, solve
from riemann_deform.surface import (Chart, DeformationField, SurfaceError, build_immersion,
                                    fundamental_forms)
from riemann_deform.verify import winding_field

KINDS = ("Ch", "H", "A", "K")


@pytest.fixture(scope="module")
def sphere_problems(sphere16, euclid):
    return {k: DeformationProblem(sphere16, euclid, k) for k in KINDS}


@pytest.fixture(scope="module")
def cap_problem(cap16, euclid):
    return DeformationProblem(cap16, euclid, "H")


def test_kind_parse():
    assert DeformationKind.parse("h") is DeformationKind.H
    assert DeformationKind.parse("Ch") is DeformationKind.CH
    with pytest.raises(ValueError):
        DeformationKind.parse("volume")


@pytest.mark.parametrize("kind", KINDS)
def test_zero_field_zero_residual(sphere_problems, kind):
    prob = sphere_problems[kind]
    r = prob.residual(DeformationField.zero(prob.size))
    assert np.abs(r.stacked()).max() < 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_translation_zero_residual(sphere_problems, kind):
    prob = sphere_problems[kind]
    z = np.tile([0.3, -0.2, 0.1], (prob.size, 1))
    r = prob.residual(DeformationField.from_displacement(z, prob.forms))
    assert np.abs(r.stacked()).max() < 1e-9


def _homothety(prob, eps):
    n = prob.size
    return prob.residual(DeformationField.from_coefficients(np.zeros((n, 2)), np.full(n, eps),
                                                            prob.forms))


def test_homothety_g_and_mean_curvature(sphere_problems, grid16, euclid):
    eps = 0.05
    r = _homothety(sphere_problems["H"], eps)
    # G only sees discretization error of d(c n); it falls off at high order
    fine = _homothety(DeformationProblem(build_immersion(
        Chart.make("stereographic_sphere", R=1.0), PolarGrid(24, 96)), euclid, "H"), eps)
    assert np.abs(r.g).max() < 1e-6
    assert np.abs(fine.g).max() < np.abs(r.g).max() / 16
    assert np.abs(r.inv - (1 / (1 + eps) - 1)).max() < 10 * grid16.h**2 * eps


def test_translation_in_nullspace(sphere_problems):
    prob = sphere_problems["H"]
    L, _ = prob.interior_matrix()
    Lnorm = spl.norm(L)
    for e in np.eye(3):
        assert np.linalg.norm(L @ translation_coefficients(prob, e)) <= 1e-6 * Lnorm


@pytest.mark.parametrize("kind", KINDS)
def test_jacobian_matches_central_difference(cap16, euclid, kind):
    prob = DeformationProblem(cap16, euclid, kind)
    L, _ = prob.interior_matrix()
    d = smooth_direction(prob.grid, np.random.default_rng(7))
    d /= np.abs(d).max()
    eps = 1e-4
    fd = (prob.residual(prob.field(eps * d)).stacked()
          - prob.residual(prob.field(-eps * d)).stacked()) / (2 * eps)
    assert np.linalg.norm(L @ d - fd) <= 1e-6 * np.linalg.norm(fd)


def test_negative_index_zero_data_gives_zero(cap_problem):
    g = cap_problem.grid
    bc = boundary_coefficients(cap_problem.base, cap_problem.metric,
                               winding_field(g.boundary_theta, -1))
    lin = assemble_linear_system(cap_problem, bc, g.nearest([0.3, 0.1]))
    sol = solve(from_linear_system(lin))
    assert sol.kernel_dim == 0
    assert np.abs(sol.x).max() < 1e-10


def test_lambda_from_first_tangent(euclid):
    # R = 2 stereographic sphere: g11 = 4 on the rim
    grid = PolarGrid(8, 32)
    im = build_immersion(Chart.make("stereographic_sphere", R=2.0), grid)
    g11 = fundamental_forms(im, euclid).g[grid.boundary, 0, 0]
    assert np.allclose(g11, 4.0)
    l = np.tile([1.0, 0.0], (grid.n_theta, 1))
    bc = boundary_coefficients(im, euclid, l)
    assert np.allclose(bc.lam_tilde, [4.0, 0.0])
    assert np.allclose(bc.lam, 1.0)
    assert bc.index == 0


@pytest.mark.parametrize("k", range(-2, 4))
def test_synthetic_winding(k):
    th = 2 * np.pi * np.arange(64) / 64
    lam_tilde = np.column_stack([np.cos(k * th), np.sin(k * th)])
    # the complex coefficient is the conjugate of lam_tilde read as x + iy
    assert compute_index(lam_tilde[:, 0] - 1j * lam_tilde[:, 1]) == -k
    assert compute_index(np.exp(1j * k * th)) == k


def test_zero_gamma_gives_zero_phi(cap16, euclid):
    bc = boundary_coefficients(cap16, euclid, winding_field(cap16.grid.boundary_theta, 1), 0.0)
    assert not bc.phi_rate.any()
    bc2 = bc.with_gamma_rate(np.ones(cap16.grid.n_theta))
    assert np.allclose(bc2.phi_rate * np.linalg.norm(bc.lam_tilde, axis=1), 1.0)


def test_boundary_errors(cap16, euclid):
    with pytest.raises(LinearizationError):
        boundary_coefficients(cap16, euclid, np.ones((3, 2)))
    with pytest.raises(LinearizationError):
        boundary_coefficients(cap16, euclid, np.zeros((cap16.grid.n_theta, 2)))


def test_fourier_series():
    th = np.linspace(0, 2 * np.pi, 7)
    assert np.allclose(fourier_series([[0, 2.0, 0.0], [1, 0.0, -1.0]], th), 2 - np.sin(th))
    assert not fourier_series(None, th).any()


def test_fix_point_out_of_range(cap_problem):
    with pytest.raises(LinearizationError):
        assemble_linear_system(cap_problem, None, cap_problem.size + 5)


def test_complex_form_on_sphere_area_kind(euclid):
    # fit_residual is relative to the principal-part scale, stricter than 1e-6 * |L|
    im = build_immersion(Chart.make("stereographic_sphere", R=1.0), PolarGrid(24, 96))
    prob = DeformationProblem(im, euclid, "A")
    bc = boundary_coefficients(im, euclid, winding_field(im.grid.boundary_theta, 1))
    lin = assemble_linear_system(prob, bc)
    cf = to_complex_form(lin)
    assert cf.available and cf.fit_residual <= 1e-6
    assert not cf.psi.any()
    assert np.allclose(cf.lam, bc.lam)


def test_complex_form_holomorphic_reduction(grid16):
    n = grid16.size
    one = np.ones(n)
    # grad c = a and div a = 0: the curl of the first gives curl a = 0
    coef = {"G1.c.d1": one, "G2.c.d2": one, "G1.a1.q0": -one, "G2.a2.q0": -one,
            "inv.a1.d1": one, "inv.a2.d2": one}
    cf = complex_form_from_coefficients(coef, grid16)
    assert cf.available
    # exact up to roundoff from differentiating constant coefficient fields
    for arr in (cf.A, cf.B, cf.E):
        assert np.abs(arr).max() < 1e-12
    assert cf.fit_residual < 1e-14


def test_complex_form_refuses_singular_block(grid16):
    n = grid16.size
    cf = complex_form_from_coefficients({"G1.c.d1": np.ones(n)}, grid16)
    assert not cf.available and "joint" in cf.reason


def test_coefficient_report_shape(cap_problem):
    lin = assemble_linear_system(cap_problem, None)
    rep = coefficient_report(lin)
    assert len(rep) == 3 * 3 * 6
    assert all(v.shape == (cap_problem.size,) for v in rep.values())


def test_non_isothermal_base_refused(grid16, euclid):
    ortho = build_immersion(Chart.make("orthographic_cap", R=1.0, rho=0.6), grid16)
    with pytest.raises(SurfaceError, match="conjugate isothermal"):
        DeformationProblem(ortho, euclid, "H")


def test_curved_ambient_g_fidelity(grid16):
    met = MetricField.constant_curvature(0.5)
    im = build_immersion(Chart.make("spherical_cap", R=1.0, rho=0.6), PolarGrid(8, 32))
    prob = DeformationProblem(im, met, "A")
    assert np.abs(prob.residual(DeformationField.zero(prob.size)).stacked()).max() < 1e-12
