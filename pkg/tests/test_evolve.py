import numpy as np
import pytest
import scipy.sparse.linalg as spl

from riemann_deform.ambient import MetricField
from riemann_deform.evolve import (BudgetExceeded, ClosedSurface, TRAJECTORY_COLUMNS, _align,
                                   closed_translation_fields, glue_closed_system, initial_state,
                                   run, smallness_budget, step, trajectory_csv)
from riemann_deform.grid import PolarGrid
from riemann_deform.linearize import DeformationProblem, boundary_coefficients
from riemann_deform.rhsolver import solve, subspace_angle
from riemann_deform.surface import Chart, build_immersion
from riemann_deform.verify import winding_field

G12 = PolarGrid(12, 48)
CAP = {"kind": "spherical_cap", "R": 1.0, "rho": np.pi / 4}
N1 = {"l_fourier": {"l1": [[1, 1.0, 0.0]], "l2": [[1, 0.0, -1.0]]}}


@pytest.fixture(scope="module")
def cap_problem():
    return DeformationProblem(build_immersion(Chart.from_config(CAP), G12),
                              MetricField.euclidean(), "H")


def cfg(**kw):
    base = {"chart": CAP, "grid": "12x48", "kind": "H", "boundary": N1,
            "fix_point": [0.3, 0.1], "kernel_coeffs": [0.0], "dt": 0.01, "t0": 0.02}
    base.update(kw)
    return base


def test_zero_rate_keeps_state():
    res = run(cfg())
    st = res.state
    assert st.t == pytest.approx(0.02)
    assert np.abs(st.field.stacked()).max() < 1e-12
    assert np.allclose(st.immersion.y, res.problem.base.y, atol=1e-12)


def test_t0_zero_single_state():
    res = run(cfg(t0=0.0))
    assert res.report["steps"] == 0 and len(res.state.diagnostics) == 1


def test_budget_violation_names_step(cap_problem):
    b = smallness_budget(cap_problem)
    assert b == pytest.approx(0.1 * cap_problem.forms.H.min() / 12)
    bnd = dict(N1, gamma_rate_fourier=[[0, 0.9 * b, 0.0]], gamma_rate_ramp=8.0)
    with pytest.raises(BudgetExceeded, match=r"step 3.*smallness budget"):
        run(cfg(boundary=bnd, t0=0.05))


def test_kernel_coefficient_count_checked():
    with pytest.raises(ValueError, match="kernel coefficients"):
        run(cfg(kernel_coeffs=[]))


def test_manufactured_translation_trajectory(cap_problem):
    # index -1 without a fix point has no kernel, so boundary data generated by a
    # uniform translation z(t) = t * delta must be reproduced by the integrator
    prob = cap_problem
    bc = boundary_coefficients(prob.base, prob.metric, winding_field(G12.boundary_theta, -1))
    delta = np.array([0.004, -0.002, 0.003])
    gamma = bc.v @ delta
    st = initial_state(prob)
    for _ in range(3):
        st = step(prob, st, bc, gamma, [], 0.01)
    disp = st.immersion.y - prob.base.y
    assert np.abs(disp - 0.03 * delta).max() < 1e-8


def test_steering_kernel_is_deterministic_and_small_drift():
    a = run(cfg(kernel_coeffs=[1.0]))
    b = run(cfg(kernel_coeffs=[1.0]))
    assert np.array_equal(a.state.field.stacked(), b.state.field.stacked())
    assert a.report["kernel_dims"] == [1]
    assert 0 < a.report["final_drift"] <= 5e-3
    assert a.report["max_g_residual"] < 1e-6


def test_trajectory_csv():
    res = run(cfg())
    lines = trajectory_csv(res.state).splitlines()
    assert lines[0].split(",") == list(TRAJECTORY_COLUMNS)
    assert len(lines) == 1 + len(res.state.diagnostics)


def test_align_recovers_rotation():
    rng = np.random.default_rng(1)
    K, _ = np.linalg.qr(rng.normal(size=(30, 3)))
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    assert np.allclose(_align(K @ Q, K), K)


@pytest.mark.parametrize("kind", ["H", "A"])
def test_closed_sphere_kernel(kind):
    cs = ClosedSurface.sphere(G12)
    sysm = glue_closed_system(cs, MetricField.euclidean(), kind)
    sol = solve(sysm)
    assert sol.kernel_dim == 3
    W = closed_translation_fields(sysm)
    assert subspace_angle(sol.kernel, W / np.linalg.norm(W, axis=0)) < 1e-4
    Mn = spl.norm(sysm.matrix)
    for k in W.T:
        assert np.linalg.norm(sysm.matrix @ k) <= 1e-6 * Mn * np.linalg.norm(k)
    fixed = solve(glue_closed_system(cs, MetricField.euclidean(), kind, fix_point=0))
    assert fixed.kernel_dim == 0


def test_seam_mismatch_rejected():
    a = build_immersion(Chart.make("stereographic_sphere", R=1.0), G12)
    b = build_immersion(Chart.make("stereographic_sphere", R=1.1, hemisphere="north"), G12)
    with pytest.raises(ValueError, match="seam"):
        ClosedSurface(a, b, G12.boundary, G12.boundary)
