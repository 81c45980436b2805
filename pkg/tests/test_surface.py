import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from riemann_deform.ambient import MetricField
from riemann_deform.evolve import ClosedSurface
from riemann_deform.grid import PolarGrid
from riemann_deform.surface import (Chart, DeformationField, NotAdmitted, SurfaceError,
                                    area_element, build_immersion, deform_immersion,
                                    forms_csv, forms_summary, fundamental_forms,
                                    principal_curvatures, verify_conjugate_isothermal)


def test_stereographic_center_is_south_pole(sphere16):
    assert np.allclose(sphere16.y[0], [0, 0, -1], atol=1e-15)


def test_cap_boundary_angle():
    im = build_immersion(Chart.make("spherical_cap", R=1.0, rho=np.pi / 4), PolarGrid(16, 32))
    apex = im.y[0]
    rim = im.y[im.grid.boundary]
    # unit sphere centred at the origin: polar angle from the apex direction
    ang = np.arccos(np.clip(rim @ apex, -1, 1))
    assert np.abs(ang - np.pi / 4).max() < 1e-12


def test_paraboloid_accepted_saddle_rejected(grid16, euclid):
    para = Chart.make("custom", expressions=["x1", "x2", "x1**2 + x2**2"])
    forms = fundamental_forms(build_immersion(para, grid16), euclid)
    # graph of |x|^2: K = 4 / (1 + 4|x|^2)^2
    r2 = (grid16.x**2).sum(axis=1)
    assert np.abs(forms.K - 4 / (1 + 4 * r2) ** 2).max() < 1e-10
    saddle = Chart.make("custom", expressions=["x1", "x2", "x1**2 - x2**2"])
    with pytest.raises(NotAdmitted):
        fundamental_forms(build_immersion(saddle, grid16), euclid)


def test_plane_rejected(grid16, euclid):
    with pytest.raises(NotAdmitted):
        fundamental_forms(build_immersion(Chart.make("plane"), grid16), euclid)


def test_unit_sphere_forms_at_origin(sphere_forms16):
    f = sphere_forms16
    assert np.allclose(f.g[0], 4 * np.eye(2), atol=1e-14)
    assert np.allclose(f.b[0], 4 * np.eye(2), atol=1e-14)
    assert f.H[0] == pytest.approx(1.0, abs=1e-14)
    assert f.K[0] == pytest.approx(1.0, abs=1e-14)


def test_unit_sphere_everywhere(grid16, sphere_forms16):
    f = sphere_forms16
    r = grid16.r
    assert np.allclose(f.k1, 1, atol=1e-12) and np.allclose(f.k2, 1, atol=1e-12)
    assert np.allclose(f.sqrt_g, 4 / (1 + r**2) ** 2, atol=1e-12)
    assert np.all(f.H > 0)


def test_principal_curvatures_diagonal():
    k1, k2, H, K = principal_curvatures(np.eye(2), np.diag([2.0, 3.0]))
    assert (k1, k2, H, K) == pytest.approx((2, 3, 2.5, 6))
    k1, k2, H, K = principal_curvatures(2 * np.eye(2), 2 * np.eye(2))
    assert (k1, k2, H, K) == pytest.approx((1, 1, 1, 1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_principal_curvatures_match_generalized_eigh(seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(2, 2))
    g = m @ m.T + 0.5 * np.eye(2)
    b = rng.normal(size=(2, 2))
    b = b + b.T
    k1, k2, H, K = principal_curvatures(g, b)
    ref = sla.eigh(b, g, eigvals_only=True)
    assert np.allclose(np.sort([k1, k2]), ref, atol=1e-10 * (1 + np.abs(ref).max()))
    assert H == pytest.approx(ref.mean(), abs=1e-10 * (1 + np.abs(ref).max()))


def test_zero_field_keeps_immersion(sphere16):
    im = deform_immersion(sphere16, DeformationField.zero(sphere16.grid.size))
    assert np.array_equal(im.y, sphere16.y)


def test_homothety_field(grid16, sphere16, euclid, sphere_forms16):
    eps = 0.05
    n = grid16.size
    fld = DeformationField.from_coefficients(np.zeros((n, 2)), np.full(n, eps), sphere_forms16)
    forms = fundamental_forms(deform_immersion(sphere16, fld), euclid)
    assert np.abs(forms.H - 1 / (1 + eps)).max() < 10 * grid16.h**2 * eps


def test_translation_field(grid16, sphere16, euclid, sphere_forms16):
    z = np.tile([0.2, -0.1, 0.3], (grid16.size, 1))
    fld = DeformationField.from_displacement(z, sphere_forms16)
    forms = fundamental_forms(deform_immersion(sphere16, fld), euclid)
    base = sphere_forms16
    for name in ("g", "b", "H", "K"):
        assert np.abs(getattr(forms, name) - getattr(base, name)).max() < 1e-9


def test_conjugate_isothermal(sphere_forms16, grid16, euclid):
    rep = verify_conjugate_isothermal(sphere_forms16, tol=1e-10)
    assert rep["passed"] and rep["max_b12"] <= 1e-10 and rep["max_b11_minus_b22"] <= 1e-10
    ortho = build_immersion(Chart.make("orthographic_cap", R=1.0, rho=0.6), grid16)
    assert not verify_conjugate_isothermal(fundamental_forms(ortho, euclid))["passed"]


def test_disk_area_without_admittance(grid16, euclid):
    forms = fundamental_forms(build_immersion(Chart.make("plane"), grid16), euclid, admit=False)
    _, area = area_element(forms, grid16)
    assert area == pytest.approx(np.pi, abs=1e-10)


def test_two_chart_sphere_area_converges(euclid):
    errs = [abs(ClosedSurface.sphere(PolarGrid(n, 4 * n)).total_area(euclid) - 4 * np.pi)
            for n in (8, 16)]
    assert errs[1] < errs[0] / 3.5 and errs[1] < 1e-3


def test_minimal_grid_area(euclid):
    g = PolarGrid(8, 16)
    _, area = area_element(fundamental_forms(build_immersion(
        Chart.make("stereographic_sphere", R=1.0), g), euclid), g)
    assert np.isfinite(area) and area > 0


def test_curved_ambient_cap_admitted(grid16):
    forms = fundamental_forms(build_immersion(Chart.make("spherical_cap", R=1.0, rho=0.6), grid16),
                              MetricField.constant_curvature(0.5))
    assert np.all(forms.k1 > 0) and np.all(forms.H > 0)
    assert verify_conjugate_isothermal(forms)["passed"]


def test_chart_config_and_errors(grid16, sphere16, sphere_forms16):
    ch = Chart.make("spherical_cap", R=2.0, rho=0.5)
    assert Chart.from_config(ch.to_config()).to_config() == ch.to_config()
    with pytest.raises(SurfaceError):
        Chart.make("torus")
    text = forms_csv(sphere16, sphere_forms16)
    assert text.count("\n") == grid16.size + 1
    assert forms_summary(sphere_forms16)["H"]["min"] == pytest.approx(1.0)
