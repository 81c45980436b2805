"""Time stepping of deformations and the two-chart closed-surface system."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .ambient import MetricField
from .grid import PolarGrid
from .linearize import (DeformationKind, DeformationProblem, BoundaryCondition,
                        assemble_linear_system, boundary_from_config, fix_point_rows,
                        invariant_of)
from .rhsolver import RHSystem, from_linear_system, solve
from .surface import (Chart, DeformationField, Immersion, SurfaceError, build_immersion,
                      deform_immersion, fundamental_forms)

MONITORED = (DeformationKind.CH, DeformationKind.H, DeformationKind.A, DeformationKind.K)


class BudgetExceeded(ValueError):
    """Boundary rate larger than the smallness budget."""


@dataclass(eq=False)
class EvolutionState:
    t: float
    field: DeformationField
    immersion: Immersion
    diagnostics: list | None = None
    kernel: np.ndarray | None = None   # last kernel basis, used to align the next one
    step_index: int = 0

    def __post_init__(self):
        if self.diagnostics is None:
            self.diagnostics = []


def smallness_budget(problem: DeformationProblem) -> float:
    return 0.1 * float(problem.forms.H.min()) * problem.grid.h


def _align(K_new: np.ndarray, K_old: np.ndarray | None) -> np.ndarray:
    """Rotate the new kernel basis onto the previous one (orthogonal Procrustes)."""
    if K_old is None or K_old.shape != K_new.shape or K_new.shape[1] == 0:
        return K_new
    u, _, vt = np.linalg.svd(K_new.T @ K_old)
    return K_new @ (u @ vt)


def initial_state(problem: DeformationProblem) -> EvolutionState:
    n = problem.size
    st = EvolutionState(0.0, DeformationField.zero(n), problem.base)
    st.diagnostics.append(diagnostics(problem, st, kernel_dim=None, solve_residual=0.0))
    return st


def diagnostics(problem: DeformationProblem, state: EvolutionState, kernel_dim,
                solve_residual) -> dict:
    forms = fundamental_forms(state.immersion, problem.metric)
    row = {"t": state.t}
    for kind in MONITORED:
        q0 = invariant_of(kind, problem.forms)
        q = invariant_of(kind, forms)
        row[f"drift_{kind.value}"] = float(np.abs(q - q0).max() / np.abs(q0).max())
    g = problem.residual(state.field).g
    row["g_residual"] = float(np.abs(g).max())
    row["kernel_dim"] = -1 if kernel_dim is None else int(kernel_dim)
    row["solve_residual"] = float(solve_residual)
    return row


def rate_field(problem: DeformationProblem, state: EvolutionState, bc: BoundaryCondition,
               kernel_coeffs, fix_point=None, tau_kernel=1e-7):
    lin = assemble_linear_system(problem, bc, fix_point, state=state.field)
    sol = solve(from_linear_system(lin), tau_kernel=tau_kernel)
    coeffs = np.asarray(kernel_coeffs if kernel_coeffs is not None else [], dtype=float)
    if coeffs.size != sol.kernel_dim:
        raise ValueError(f"{coeffs.size} kernel coefficients given but kernel_dim is "
                         f"{sol.kernel_dim} at t={state.t:.6g}")
    K = _align(sol.kernel, state.kernel)
    x = sol.x + (K @ coeffs if coeffs.size else 0.0)
    return problem.field(x), sol, K


def step(problem: DeformationProblem, state: EvolutionState, bc: BoundaryCondition, gamma_rate,
         kernel_coeffs, dt, fix_point=None, tau_kernel=1e-7, midpoint=False) -> EvolutionState:
    """Advance by dt: solve for the rate at the current state and accumulate z."""
    gamma_rate = np.broadcast_to(np.asarray(gamma_rate, dtype=float), bc.theta.shape)
    budget = smallness_budget(problem)
    size = float(np.abs(gamma_rate).max())
    if size > budget:
        raise BudgetExceeded(f"step {state.step_index + 1}: boundary rate {size:.3g} exceeds the "
                             f"smallness budget {budget:.3g} (0.1 * min H * h)")
    bc_t = bc.with_gamma_rate(gamma_rate)
    rate, sol, K = rate_field(problem, state, bc_t, kernel_coeffs, fix_point, tau_kernel)
    if midpoint:
        half = EvolutionState(state.t + dt / 2, state.field + rate.scaled(dt / 2),
                              deform_immersion(problem.base, state.field + rate.scaled(dt / 2)),
                              kernel=K)
        rate, sol, K = rate_field(problem, half, bc_t, kernel_coeffs, fix_point, tau_kernel)
    fld = state.field + rate.scaled(dt)
    im = deform_immersion(problem.base, fld, state.t + dt)
    fundamental_forms(im, problem.metric)  # raises NotAdmitted when k_i <= 0
    new = EvolutionState(state.t + dt, fld, im, list(state.diagnostics), K,
                         state.step_index + 1)
    new.diagnostics.append(diagnostics(problem, new, sol.kernel_dim,
                                       max(sol.residuals.values())))
    return new


# -- configured runs ------------------------------------------------------------

@dataclass
class RunResult:
    state: EvolutionState
    problem: DeformationProblem
    report: dict


def problem_from_config(cfg: dict, grid: PolarGrid | None = None):
    metric = MetricField.from_config(cfg.get("metric", {"kind": "euclidean"}))
    grid = grid or PolarGrid.parse(cfg.get("grid", "32x128"))
    chart = Chart.from_config(cfg["chart"])
    im = build_immersion(chart, grid)
    problem = DeformationProblem(im, metric, cfg.get("kind", "H"))
    return problem


def fix_node(grid: PolarGrid, fix_point):
    if fix_point is None:
        return None
    return grid.nearest(fix_point)


def gamma_rate_at(bc_cfg: dict, base_rate: np.ndarray, t: float) -> np.ndarray:
    return base_rate * (1.0 + float(bc_cfg.get("gamma_rate_ramp", 0.0)) * t)


def run(cfg: dict, grid: PolarGrid | None = None, log=None) -> RunResult:
    """Integrate from t=0 to t0 in steps of dt; deterministic for a fixed config."""
    problem = problem_from_config(cfg, grid)
    bc_cfg = cfg.get("boundary", {})
    bc = boundary_from_config(problem.base, problem.metric, bc_cfg)
    t0 = float(cfg.get("t0", 0.0))
    dt = float(cfg.get("dt", 0.01))
    nsteps = int(round(t0 / dt)) if t0 > 0 else 0
    if nsteps and abs(nsteps * dt - t0) > 1e-9 * max(t0, 1):
        raise ValueError("t0 must be an integer multiple of dt")
    fix = fix_node(problem.grid, cfg.get("fix_point"))
    coeffs = cfg.get("kernel_coeffs", [])
    tau = float(cfg.get("tau_kernel", 1e-7))
    midpoint = cfg.get("integrator", "euler") == "midpoint"
    state = initial_state(problem)
    for k in range(nsteps):
        gamma = gamma_rate_at(bc_cfg, bc.gamma_rate, state.t)
        state = step(problem, state, bc, gamma, coeffs, dt, fix, tau, midpoint)
        if log:
            log(f"step {k + 1}/{nsteps} t={state.t:.6g} "
                f"drift_{problem.kind.value}={state.diagnostics[-1]['drift_' + problem.kind.value]:.3e}")
    final = state.diagnostics[-1]
    kind = problem.kind.value
    report = {
        "kind": kind,
        "index": bc.index,
        "steps": nsteps,
        "t_final": state.t,
        "final_drift": final[f"drift_{kind}"],
        "max_g_residual": max(d["g_residual"] for d in state.diagnostics),
        "kernel_dims": sorted({d["kernel_dim"] for d in state.diagnostics[1:]}),
        "invariants": {
            f"drift_{kind}_le_5e-3": final[f"drift_{kind}"] <= 5e-3,
            "admitted": True,
        },
    }
    return RunResult(state, problem, report)


TRAJECTORY_COLUMNS = ("t",) + tuple(f"drift_{k.value}" for k in MONITORED) + \
    ("g_residual", "kernel_dim", "solve_residual")


def trajectory_csv(state: EvolutionState) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for d in state.diagnostics:
        w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in TRAJECTORY_COLUMNS])
    return buf.getvalue()


def final_state_csv(problem: DeformationProblem, state: EvolutionState) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("r", "theta", "a1", "a2", "c", "y1", "y2", "y3"))
    g = problem.grid
    cols = np.column_stack([g.r, g.theta, state.field.a, state.field.c, state.immersion.y])
    for row in cols:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


# -- closed surfaces ----------------------------------------------------------------

@dataclass(eq=False)
class ClosedSurface:
    """Two disk charts glued along their rims; node j of each rim corresponds."""

    plus: Immersion
    minus: Immersion
    seam_plus: np.ndarray
    seam_minus: np.ndarray

    def __post_init__(self):
        gap = np.linalg.norm(self.plus.y[self.seam_plus] - self.minus.y[self.seam_minus], axis=1)
        if gap.max() > 1e-10:
            raise SurfaceError(f"seam mismatch: max distance {gap.max():.3g}")

    @classmethod
    def sphere(cls, grid: PolarGrid, R=1.0, center=(0.0, 0.0, 0.0)) -> "ClosedSurface":
        plus = build_immersion(Chart.make("stereographic_sphere", R=R, center=list(center),
                                          hemisphere="south"), grid)
        minus = build_immersion(Chart.make("stereographic_sphere", R=R, center=list(center),
                                           hemisphere="north"), grid)
        return cls(plus, minus, grid.boundary, grid.boundary)

    def total_area(self, metric: MetricField) -> float:
        w = self.plus.grid.weights
        return float(w @ fundamental_forms(self.plus, metric).sqrt_g
                     + w @ fundamental_forms(self.minus, metric).sqrt_g)


def _seam_rows(problem: DeformationProblem, nodes, sign, n_total, offset):
    """Rows of z (3 per node) and of its conormal derivative, restricted to seam nodes."""
    g = problem.grid
    n = g.size
    m = len(nodes)
    sel = sp.csr_matrix((np.ones(m), (np.arange(m), nodes)), shape=(m, n))
    Dr = g.ops["r"]
    yr = np.cos(g.theta)[:, None] * problem.base.dy[:, 0] + \
        np.sin(g.theta)[:, None] * problem.base.dy[:, 1]
    inv_len = 1.0 / np.linalg.norm(yr[nodes], axis=1)
    val, der = [], []
    for a in range(3):
        vrow, drow = [], []
        for u in range(3):
            F = sp.diags(problem.frame[:, u, a])
            vrow.append(sel @ F)
            drow.append(sp.diags(inv_len) @ (sel @ Dr @ F))
        val.append(sp.hstack(vrow))
        der.append(sp.hstack(drow))
    V = sign * sp.vstack(val)
    D = sp.vstack(der)
    pad = lambda X: sp.hstack([sp.csr_matrix((X.shape[0], offset)), X,
                               sp.csr_matrix((X.shape[0], n_total - offset - X.shape[1]))])
    return pad(V), pad(D)


def glue_closed_system(cs: ClosedSurface, metric: MetricField, kind, fix_point=None) -> RHSystem:
    """Joint system over both charts: interior rows, seam rows, optional fix point on F+.

    Seam rows match the ambient rate vectors and their outward conormal
    derivatives (which point in opposite directions on the two charts, so
    the derivative rows are summed).
    """
    pp = DeformationProblem(cs.plus, metric, kind)
    pm = DeformationProblem(cs.minus, metric, kind)
    n = pp.size
    total = 6 * n
    Lp, _ = pp.interior_matrix()
    Lm, _ = pm.interior_matrix()
    Vp, Dp = _seam_rows(pp, cs.seam_plus, 1.0, total, 0)
    Vm, Dm = _seam_rows(pm, cs.seam_minus, -1.0, total, 3 * n)
    blocks = [sp.hstack([Lp, sp.csr_matrix((3 * n, 3 * n))]),
              sp.hstack([sp.csr_matrix((3 * n, 3 * n)), Lm]),
              Vp + Vm, Dp + Dm]
    rows = {"interior_plus": slice(0, 3 * n), "interior_minus": slice(3 * n, 6 * n)}
    m = 3 * len(cs.seam_plus)
    rows["seam_value"] = slice(6 * n, 6 * n + m)
    rows["seam_derivative"] = slice(6 * n + m, 6 * n + 2 * m)
    pos = 6 * n + 2 * m
    if fix_point is not None:
        blocks.append(fix_point_rows(n, int(fix_point), 0, total))
        rows["constraint"] = slice(pos, pos + 3)
        pos += 3
    M = sp.vstack(blocks, format="csr")
    layout = {"plus.a1": slice(0, n), "plus.a2": slice(n, 2 * n), "plus.c": slice(2 * n, 3 * n),
              "minus.a1": slice(3 * n, 4 * n), "minus.a2": slice(4 * n, 5 * n),
              "minus.c": slice(5 * n, 6 * n)}
    sysm = RHSystem(M, np.zeros(M.shape[0]), rows, layout, None, (pp.grid, pm.grid),
                    {"kind": pp.kind.value, "fix_point": fix_point, "closed": True})
    sysm.meta["problems"] = (pp, pm)
    return sysm


def closed_translation_fields(sysm: RHSystem) -> np.ndarray:
    """Stacked coefficient vectors of the three ambient translations, (6N, 3)."""
    pp, pm = sysm.meta["problems"]
    cols = []
    for e in np.eye(3):
        parts = []
        for prob in (pp, pm):
            z = np.tile(e, (prob.size, 1))
            parts.append(DeformationField.from_displacement(z, prob.forms).stacked())
        cols.append(np.concatenate(parts))
    return np.array(cols).T
