"""Fast invariant suite behind ``riemann-deform verify`` (small grids, about a minute)."""
from __future__ import annotations

import time

import numpy as np

from .ambient import MetricField, ambient_norm2, transport_segment
from .evolve import ClosedSurface, closed_translation_fields, glue_closed_system
from .grid import PolarGrid
from .linearize import (DeformationProblem, assemble_linear_system, boundary_coefficients,
                        smooth_direction)
from .rhsolver import (from_linear_system, holomorphic_kernel_oracle, holomorphic_system, solve,
                       subspace_angle)
from .surface import (Chart, DeformationField, area_element, build_immersion, fundamental_forms)


def winding_field(theta, k):
    """Tangent coefficients l with lambda = exp(i k theta) on a conformal chart."""
    return np.column_stack([np.cos(k * theta), -np.sin(k * theta)])


def _row(name, passed, detail):
    return {"name": name, "passed": bool(passed), "detail": detail}


def check_index(grid=None):
    grid = grid or PolarGrid(8, 64)
    cap = build_immersion(Chart.make("spherical_cap", R=1.0, rho=np.pi / 4), grid)
    found = {}
    for k in range(-2, 4):
        bc = boundary_coefficients(cap, MetricField.euclidean(), winding_field(grid.boundary_theta, k))
        found[k] = bc.index
    ok = all(k == v for k, v in found.items())
    return _row("index winding k=-2..3", ok, f"computed {list(found.values())}")


def check_holomorphic(grid=None, seed=0):
    grid = grid or PolarGrid(16, 64)
    dims = {}
    for n in (0, 1, 2):
        dims[n] = solve(holomorphic_system(grid, n), seed=seed).kernel_dim
    ok = all(dims[n] == holomorphic_kernel_oracle(n) for n in dims)
    return _row("holomorphic kernel 2n+1", ok, f"n=0,1,2 -> {list(dims.values())}")


def check_sphere_forms(grid=None):
    grid = grid or PolarGrid(16, 64)
    R = 1.7
    forms = fundamental_forms(build_immersion(Chart.make("stereographic_sphere", R=R), grid),
                              MetricField.euclidean())
    err = max(np.abs(forms.H - 1 / R).max(), np.abs(forms.K - 1 / R**2).max())
    return _row("sphere H=1/R, K=1/R^2", err < 1e-10, f"max error {err:.2e}")


def check_cap_area(grid=None):
    grid = grid or PolarGrid(16, 64)
    rho = np.pi / 3
    forms = fundamental_forms(build_immersion(Chart.make("spherical_cap", R=1.0, rho=rho), grid),
                              MetricField.euclidean())
    _, area = area_element(forms, grid)
    exact = 2 * np.pi * (1 - np.cos(rho))
    err = abs(area - exact) / exact
    return _row("cap area", err < 1e-5, f"relative error {err:.2e}")


def check_g_fidelity(grid=None):
    grid = grid or PolarGrid(16, 64)
    sph = build_immersion(Chart.make("stereographic_sphere", R=1.0), grid)
    prob = DeformationProblem(sph, MetricField.euclidean(), "H")
    z = np.tile([0.3, -0.2, 0.1], (prob.size, 1))
    r = prob.residual(DeformationField.from_displacement(z, prob.forms))
    err = np.abs(r.g).max()
    return _row("translation leaves G = 0", err < 1e-8, f"max |G| {err:.2e}")


def check_transport(n_paths=20, seed=0):
    met = MetricField.constant_curvature(1.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_paths):
        p0 = rng.uniform(-2, 2, 3)
        step = rng.normal(size=3)
        step *= rng.uniform(0.1, 1.0) / np.linalg.norm(step)
        v0 = rng.normal(size=3)
        v = transport_segment(met, p0, step, v0)
        n0 = ambient_norm2(met, p0, v0)
        worst = max(worst, abs(ambient_norm2(met, p0 + step, v) - n0) / n0)
    return _row("transport preserves norm (kappa=1)", worst < 1e-8, f"max relative {worst:.2e}")


def check_jacobian(grid=None, seed=0, n_dirs=3):
    grid = grid or PolarGrid(12, 48)
    cap = build_immersion(Chart.make("spherical_cap", R=1.0, rho=np.pi / 4), grid)
    prob = DeformationProblem(cap, MetricField.euclidean(), "H")
    L, _ = prob.interior_matrix()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_dirs):
        d = smooth_direction(grid, rng)
        d /= np.abs(d).max()
        eps = 1e-4
        fd = (prob.residual(prob.field(eps * d)).stacked()
              - prob.residual(prob.field(-eps * d)).stacked()) / (2 * eps)
        worst = max(worst, np.linalg.norm(L @ d - fd) / np.linalg.norm(fd))
    return _row("Jacobian vs finite differences", worst < 1e-5, f"max relative {worst:.2e}")


def check_cap_kernel(grid=None, seed=0):
    grid = grid or PolarGrid(16, 64)
    cap = build_immersion(Chart.make("spherical_cap", R=1.0, rho=np.pi / 4), grid)
    prob = DeformationProblem(cap, MetricField.euclidean(), "A")
    bc = boundary_coefficients(cap, prob.metric, winding_field(grid.boundary_theta, 1))
    lin = assemble_linear_system(prob, bc, grid.nearest([0.3, 0.1]))
    sol = solve(from_linear_system(lin), seed=seed)
    return _row("cap n=1 with fixed point: kernel 1", sol.kernel_dim == 1,
                f"dim {sol.kernel_dim}, gap {sol.gap_ratio:.2e}")


def check_closed(grid=None, seed=0):
    grid = grid or PolarGrid(12, 48)
    cs = ClosedSurface.sphere(grid)
    sysm = glue_closed_system(cs, MetricField.euclidean(), "A")
    sol = solve(sysm, seed=seed)
    angle = np.nan
    if sol.kernel_dim == 3:
        W = closed_translation_fields(sysm)
        angle = subspace_angle(sol.kernel, W / np.linalg.norm(W, axis=0))
    ok = sol.kernel_dim == 3 and angle < 1e-3
    return _row("closed sphere kernel = translations", ok, f"dim {sol.kernel_dim}, angle {angle:.2e}")


CHECKS = (check_index, check_sphere_forms, check_cap_area, check_g_fidelity, check_transport,
          check_jacobian, check_holomorphic, check_cap_kernel, check_closed)


def run_suite(seed=0) -> list[dict]:
    rows = []
    for check in CHECKS:
        t = time.perf_counter()
        kwargs = {"seed": seed} if "seed" in check.__code__.co_varnames else {}
        try:
            row = check(**kwargs)
        except Exception as exc:  # a crash is a failed check, not an aborted suite
            row = _row(check.__name__, False, f"{type(exc).__name__}: {exc}")
        row["seconds"] = round(time.perf_counter() - t, 2)
        rows.append(row)
    return rows
