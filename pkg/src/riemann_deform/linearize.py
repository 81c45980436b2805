"""Nonlinear deformation residuals and their numerical linearization.

The unknowns are the base-frame coefficients (a^1, a^2, c) of
``z = a^j y_{,j} + c n``.  Residuals are evaluated exactly (deformed forms
are recomputed, normals are transported), and the linear operator is built
from pointwise central-difference sensitivities with respect to z and its
first and second derivatives, chained with the grid derivative operators.

Complex convention: ``w = a^1 - i a^2`` and ``lambda = (l_1 - i l_2)/|l|``
where ``l_k`` are the boundary coefficients, so that
``Re(conj(lambda) w) = (l_1 a^1 + l_2 a^2)/|l|``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .ambient import MetricField, metric_at, transport_segment
from .grid import PolarGrid
from .surface import (DeformationField, Immersion, SurfaceError,
                      deform_immersion, fundamental_forms, pointwise_forms,
                      verify_conjugate_isothermal)


class DeformationKind(str, Enum):
    CH = "Ch"  # sum of principal radii 2H/K
    H = "H"    # mean curvature
    A = "A"    # area element sqrt(g)
    K = "K"    # Gauss curvature

    @classmethod
    def parse(cls, s) -> "DeformationKind":
        if isinstance(s, cls):
            return s
        for k in cls:
            if k.value.lower() == str(s).lower():
                return k
        raise ValueError(f"unknown deformation kind {s!r}")


class LinearizationError(ValueError):
    pass


def invariant_of(kind: DeformationKind, f) -> np.ndarray:
    """The preserved scalar for ``kind`` from a forms record or dict."""
    get = (lambda k: f[k]) if isinstance(f, dict) else (lambda k: getattr(f, k))
    kind = DeformationKind.parse(kind)
    if kind is DeformationKind.H:
        return get("H")
    if kind is DeformationKind.CH:
        return 2 * get("H") / get("K")
    if kind is DeformationKind.A:
        return get("sqrt_g")
    return get("K")


def invariant_residual(kind, base_forms, deformed_forms) -> np.ndarray:
    return invariant_of(kind, deformed_forms) - invariant_of(kind, base_forms)


@dataclass(frozen=True, eq=False)
class ResidualRecord:
    g: np.ndarray    # (N, 2) covariant components of the transported normal
    inv: np.ndarray  # (N,)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.g[:, 0], self.g[:, 1], self.inv])


class DeformationProblem:
    """Base surface, ambient metric and deformation kind, with cached base data."""

    def __init__(self, base: Immersion, metric: MetricField, kind="H", require_isothermal=True,
                 isothermal_tol=1e-8):
        self.kind = DeformationKind.parse(kind)
        self.metric = metric
        forms = fundamental_forms(base, metric)
        self.base = base.with_orientation(forms.orientation)
        self.forms = forms
        self.grid: PolarGrid = base.grid
        self.isothermal = verify_conjugate_isothermal(forms, isothermal_tol)
        if require_isothermal and not self.isothermal["passed"]:
            raise SurfaceError(
                "base chart is not conjugate isothermal "
                f"(max |b12| = {self.isothermal['max_b12']:.3g}, "
                f"max |b11-b22| = {self.isothermal['max_b11_minus_b22']:.3g})")
        self.q0 = invariant_of(self.kind, forms)
        # frame[:, u, alpha]: z^alpha = sum_u coef_u frame_u^alpha, u = (a1, a2, c)
        self.frame = np.concatenate([forms.dy, forms.n[:, None, :]], axis=1)

    @property
    def size(self) -> int:
        return self.grid.size

    # -- fields ------------------------------------------------------------
    def field(self, coef) -> DeformationField:
        """DeformationField from stacked (a1, a2, c) or an (N, 3) array."""
        coef = np.asarray(coef, dtype=float)
        if coef.ndim == 1:
            coef = coef.reshape(3, -1).T
        return DeformationField.from_coefficients(coef[:, :2], coef[:, 2], self.forms)

    def derivatives(self, z):
        return self.grid.grad(z), self.grid.hessian(z)

    # -- pointwise residuals -------------------------------------------------
    def g_pointwise(self, z, zd):
        ydef = self.base.y + z
        ntr = transport_segment(self.metric, self.base.y, z, self.forms.n)
        amb = metric_at(self.metric, ydef)
        return np.einsum("...ab,...a,...ib->...i", amb, ntr, self.base.dy + zd)

    def inv_pointwise(self, z, zd, zdd):
        f = pointwise_forms(self.metric, self.base.y + z, self.base.dy + zd, self.base.d2y + zdd,
                            self.forms.orientation)
        return invariant_of(self.kind, f) - self.q0

    def residual(self, fld: DeformationField, check_admitted=False) -> ResidualRecord:
        """Exact residuals of the deformed surface y + z."""
        z = fld.z
        zd, zdd = self.derivatives(z)
        if check_admitted:
            fundamental_forms(deform_immersion(self.base, fld), self.metric)
        return ResidualRecord(self.g_pointwise(z, zd), self.inv_pointwise(z, zd, zdd))

    # -- linearization ---------------------------------------------------------
    def sensitivities(self, fld: DeformationField | None = None, delta=None):
        """Central-difference partials of the pointwise residuals.

        Returns (JG, JI): JG[r][name] of shape (N, 3) for r in (0, 1) and
        JI[name] of shape (N, 3), with name in {'z','x','y','xx','xy','yy'}
        and the last axis the ambient component alpha.
        """
        n = self.size
        z = np.zeros((n, 3)) if fld is None else fld.z
        zd, zdd = self.derivatives(z)
        if delta is None:
            delta = 1e-4 * self.grid.h
        JG = [{}, {}]
        JI = {}
        slots = [("z", None)] + [(k, i) for i, k in enumerate(("x", "y"))] + \
                [(k, i) for i, k in enumerate(("xx", "xy", "yy"))]
        for name, i in slots:
            for r in (0, 1):
                JG[r][name] = np.zeros((n, 3))
            JI[name] = np.zeros((n, 3))
            for a in range(3):
                args = []
                for s in (1, -1):
                    zz, dd, hh = z.copy(), zd.copy(), zdd.copy()
                    if name == "z":
                        zz[:, a] += s * delta
                    elif len(name) == 1:
                        dd[:, i, a] += s * delta
                    else:
                        hh[:, i, a] += s * delta
                    args.append((zz, dd, hh))
                if len(name) < 2:
                    gp = self.g_pointwise(*args[0][:2])
                    gm = self.g_pointwise(*args[1][:2])
                    for r in (0, 1):
                        JG[r][name][:, a] = (gp[:, r] - gm[:, r]) / (2 * delta)
                ip = self.inv_pointwise(*args[0])
                im = self.inv_pointwise(*args[1])
                JI[name][:, a] = (ip - im) / (2 * delta)
        for r in (0, 1):
            for name in ("xx", "xy", "yy"):
                JG[r][name] = np.zeros((n, 3))
        return JG, JI

    def interior_matrix(self, fld: DeformationField | None = None, delta=None):
        """Linear operator of (G_1, G_2, invariant) rows on stacked (a1, a2, c)."""
        JG, JI = self.sensitivities(fld, delta)
        ops = self.grid.ops
        n = self.size
        blocks = []
        for J in (JG[0], JG[1], JI):
            row = []
            per_alpha = []
            for a in range(3):
                op = sp.diags(J["z"][:, a])
                for name in ("x", "y", "xx", "xy", "yy"):
                    coef = J[name][:, a]
                    if np.any(coef):
                        op = op + sp.diags(coef) @ ops[name]
                per_alpha.append(op.tocsr())
            for u in range(3):
                blk = sp.csr_matrix((n, n))
                for a in range(3):
                    blk = blk + per_alpha[a] @ sp.diags(self.frame[:, u, a])
                row.append(blk)
            blocks.append(row)
        return sp.bmat(blocks, format="csr"), (JG, JI)


# -- boundary data ------------------------------------------------------------

def fourier_series(terms, theta) -> np.ndarray:
    """Evaluate sum of a_k cos(k theta) + b_k sin(k theta) from [[k, a_k, b_k], ...]."""
    theta = np.asarray(theta, dtype=float)
    out = np.zeros_like(theta)
    for k, a, b in terms or ():
        out += a * np.cos(k * theta) + b * np.sin(k * theta)
    return out


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    theta: np.ndarray
    nodes: np.ndarray       # boundary grid indices
    l: np.ndarray           # (N_theta, 2) tangent coefficients l^i
    v: np.ndarray           # (N_theta, 3) ambient vector l^i y_{,i}
    lam_tilde: np.ndarray   # (N_theta, 2)
    lam: np.ndarray         # complex, |lam| = 1
    gamma_rate: np.ndarray  # (N_theta,)
    phi_rate: np.ndarray    # (N_theta,)
    index: int

    def with_gamma_rate(self, gamma_rate) -> "BoundaryCondition":
        gamma_rate = np.broadcast_to(np.asarray(gamma_rate, dtype=float), self.theta.shape).copy()
        mod = np.linalg.norm(self.lam_tilde, axis=1)
        return BoundaryCondition(self.theta, self.nodes, self.l, self.v, self.lam_tilde, self.lam,
                                 gamma_rate, gamma_rate / mod, self.index)


def boundary_coefficients(base: Immersion, metric: MetricField, l, gamma_rate=0.0
                          ) -> BoundaryCondition:
    """Boundary coefficients of the condition a(v, z_dot) = gamma_rate on the rim."""
    from .rhsolver import compute_index

    grid = base.grid
    nodes = grid.boundary
    theta = grid.boundary_theta
    l = np.asarray(l, dtype=float)
    if l.shape != (grid.n_theta, 2):
        raise LinearizationError(f"l must have shape ({grid.n_theta}, 2)")
    dy = base.dy[nodes]
    v = np.einsum("pi,pia->pa", l, dy)
    amb = metric_at(metric, base.y[nodes])
    lam_tilde = np.einsum("pab,pka,pb->pk", amb, dy, v)
    mod = np.linalg.norm(lam_tilde, axis=1)
    if np.any(mod <= 1e-12 * max(mod.max(), 1e-300)):
        raise LinearizationError("degenerate boundary field: lambda~ vanishes at a boundary node")
    lam = (lam_tilde[:, 0] - 1j * lam_tilde[:, 1]) / mod
    gamma_rate = np.broadcast_to(np.asarray(gamma_rate, dtype=float), theta.shape).copy()
    return BoundaryCondition(theta, nodes, l, v, lam_tilde, lam, gamma_rate, gamma_rate / mod,
                             compute_index(lam))


def boundary_from_config(base: Immersion, metric: MetricField, cfg: dict) -> BoundaryCondition:
    theta = base.grid.boundary_theta
    lf = cfg.get("l_fourier", {"l1": [[0, 1.0, 0.0]]})
    l = np.stack([fourier_series(lf.get("l1"), theta), fourier_series(lf.get("l2"), theta)], axis=1)
    gamma = fourier_series(cfg.get("gamma_rate_fourier"), theta)
    return boundary_coefficients(base, metric, l, gamma)


# -- assembled systems ----------------------------------------------------------

@dataclass(eq=False)
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    rows: dict              # block name -> slice
    kind: DeformationKind
    problem: DeformationProblem
    bc: BoundaryCondition | None
    fix_point: int | None
    sensitivities: tuple = field(repr=False, default=())
    fix_rows: bool = False

    @property
    def index(self):
        return None if self.bc is None else self.bc.index

    @property
    def n_unknowns(self):
        return self.matrix.shape[1]


def fix_point_rows(n_nodes: int, node: int, offset=0, n_total=None):
    """Three rows pinning (a1, a2, c) at ``node``."""
    n_total = 3 * n_nodes if n_total is None else n_total
    cols = offset + np.array([node, n_nodes + node, 2 * n_nodes + node])
    return sp.csr_matrix((np.ones(3), (np.arange(3), cols)), shape=(3, n_total))


def boundary_rows(bc: BoundaryCondition, n_nodes: int):
    """Rows Re(conj(lambda) w) = phi_rate, i.e. (l_1 a^1 + l_2 a^2)/|l| = phi_rate."""
    m = len(bc.nodes)
    lt = bc.lam_tilde / np.linalg.norm(bc.lam_tilde, axis=1)[:, None]
    rows = np.repeat(np.arange(m), 2)
    cols = np.column_stack([bc.nodes, n_nodes + bc.nodes]).ravel()
    return sp.csr_matrix((lt.ravel(), (rows, cols)), shape=(m, 3 * n_nodes)), bc.phi_rate.copy()


def assemble_linear_system(problem: DeformationProblem, bc: BoundaryCondition | None,
                           fix_point: int | None = None, state: DeformationField | None = None,
                           interior_rhs=None, delta=None) -> LinearSystem:
    """Stack interior (G and invariant) rows, boundary rows and fix-point rows.

    ``state`` selects the linearization point (zero field by default).
    """
    n = problem.size
    L, sens = problem.interior_matrix(state, delta)
    blocks = [L]
    rhs = [np.zeros(3 * n) if interior_rhs is None else np.asarray(interior_rhs, dtype=float)]
    rows = {"interior": slice(0, 3 * n)}
    pos = 3 * n
    if bc is not None:
        B, phi = boundary_rows(bc, n)
        blocks.append(B)
        rhs.append(phi)
        rows["boundary"] = slice(pos, pos + B.shape[0])
        pos += B.shape[0]
    if fix_point is not None:
        fix_point = int(fix_point)
        if not 0 <= fix_point < n:
            raise LinearizationError("fix_point outside the grid")
        frame = problem.frame[fix_point]
        if abs(np.linalg.det(frame)) < 1e-10 * np.prod(np.linalg.norm(frame, axis=1)):
            raise LinearizationError("ill-conditioned frame at fix_point")
        blocks.append(fix_point_rows(n, fix_point))
        rhs.append(np.zeros(3))
        rows["constraint"] = slice(pos, pos + 3)
        pos += 3
    return LinearSystem(sp.vstack(blocks, format="csr"), np.concatenate(rhs), rows, problem.kind,
                        problem, bc, fix_point, sens)


# -- diagnostics ------------------------------------------------------------------

def coefficient_report(sys: LinearSystem) -> dict:
    """Named per-point coefficients of the linearized rows.

    For each row block (G1, G2, invariant) and unknown (a1, a2, c), the
    coefficients multiplying the value, the first and the second Cartesian
    derivatives of the unknown.  The G rows give the first-order operator in
    (a, c); ``q0`` collects zeroth-order terms.
    """
    JG, JI = sys.sensitivities
    prob = sys.problem
    grid = prob.grid
    frame = prob.frame
    dframe = grid.grad(frame.reshape(grid.size, 9)).reshape(grid.size, 2, 3, 3)
    d2frame = grid.hessian(frame.reshape(grid.size, 9)).reshape(grid.size, 3, 3, 3)
    out = {}
    names = ("G1", "G2", "inv")
    unknowns = ("a1", "a2", "c")
    for rname, J in zip(names, (JG[0], JG[1], JI)):
        for u, uname in enumerate(unknowns):
            f = frame[:, u]          # (N, 3)
            df = dframe[:, :, u]     # (N, 2, 3)
            d2f = d2frame[:, :, u]   # (N, 3, 3)
            # value coefficient: J_z f + J_i d_i f + J_ij d_ij f
            val = np.einsum("pa,pa->p", J["z"], f)
            for i, k in enumerate(("x", "y")):
                val += np.einsum("pa,pa->p", J[k], df[:, i])
            for i, k in enumerate(("xx", "xy", "yy")):
                val += np.einsum("pa,pa->p", J[k], d2f[:, i])
            d1 = [np.einsum("pa,pa->p", J[k], f) for k in ("x", "y")]
            # derivative of (u * f) by x_i twice contributes 2 d_j u d_i f
            for j, kj in enumerate(("x", "y")):
                for i, (k, pair) in enumerate(zip(("xx", "xy", "yy"), ((0, 0), (0, 1), (1, 1)))):
                    if j in pair:
                        other = pair[1] if pair[0] == j else pair[0]
                        mult = 2.0 if pair[0] == pair[1] else 1.0
                        d1[j] = d1[j] + mult * np.einsum("pa,pa->p", J[k], df[:, other])
            d2 = [np.einsum("pa,pa->p", J[k], f) for k in ("xx", "xy", "yy")]
            out[f"{rname}.{uname}.q0"] = val
            out[f"{rname}.{uname}.d1"] = d1[0]
            out[f"{rname}.{uname}.d2"] = d1[1]
            out[f"{rname}.{uname}.d11"] = d2[0]
            out[f"{rname}.{uname}.d12"] = d2[1]
            out[f"{rname}.{uname}.d22"] = d2[2]
    return out


def coefficient_csv(report: dict, grid: PolarGrid) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = sorted(report)
    w.writerow(["r", "theta"] + keys)
    for p in range(grid.size):
        w.writerow([repr(float(grid.r[p])), repr(float(grid.theta[p]))]
                   + [repr(float(report[k][p])) for k in keys])
    return buf.getvalue()


def translation_coefficients(problem: DeformationProblem, direction) -> np.ndarray:
    """Stacked (a1, a2, c) of the constant ambient displacement ``direction``."""
    z = np.tile(np.asarray(direction, dtype=float), (problem.size, 1))
    fld = DeformationField.from_displacement(z, problem.forms)
    return fld.stacked()


def smooth_direction(grid: PolarGrid, rng: np.random.Generator, modes=3, components=3):
    """Random smooth field: low-order polynomials in (x1, x2) times low Fourier modes."""
    x, y = grid.x[:, 0], grid.x[:, 1]
    out = []
    for _ in range(components):
        f = np.zeros(grid.size)
        for p in range(modes + 1):
            for q in range(modes + 1 - p):
                f += rng.normal() * x**p * y**q
        out.append(f)
    return np.concatenate(out)


# -- complex form ---------------------------------------------------------------

ELIMINATION_TOL = 1e-8


@dataclass(eq=False)
class ComplexForm:
    """d_zbar w + A w + B conj(w) + E c = Psi in the disk, Re(conj(lam) w) = phi on the rim.

    ``available`` is False when the c-gradient block could not be eliminated;
    the other fields are then None and the joint real system must be used.
    """

    available: bool
    A: np.ndarray | None = None
    B: np.ndarray | None = None
    E: np.ndarray | None = None
    psi: np.ndarray | None = None
    lam: np.ndarray | None = None
    phi: np.ndarray | None = None
    fit_residual: float = np.inf
    reason: str = ""


def _inv2(T):
    det = T[..., 0, 0] * T[..., 1, 1] - T[..., 0, 1] * T[..., 1, 0]
    inv = np.empty_like(T)
    inv[..., 0, 0] = T[..., 1, 1]
    inv[..., 1, 1] = T[..., 0, 0]
    inv[..., 0, 1] = -T[..., 0, 1]
    inv[..., 1, 0] = -T[..., 1, 0]
    return inv / det[..., None, None]


def complex_form_from_coefficients(coef: dict, grid: PolarGrid, rhs=None, bc=None,
                                   include_e=True) -> ComplexForm:
    """Reduce (G1, G2, invariant) coefficient fields to the d_zbar form.

    The G rows read ``T dc + S a + s c = psi_G``.  With T invertible the
    c-gradient is eliminated pointwise; its curl gives one first-order row in
    a, and substituting it into the invariant row gives the other.  The
    principal parts are then combined pointwise to match (div a, curl a).
    """
    n = grid.size
    get = lambda key: coef.get(key, np.zeros(n))
    T = np.empty((n, 2, 2))
    S = np.empty((n, 2, 2))
    s = np.empty((n, 2))
    for i in range(2):
        for j in range(2):
            T[:, i, j] = get(f"G{i + 1}.c.d{j + 1}")
            S[:, i, j] = get(f"G{i + 1}.a{j + 1}.q0")
        s[:, i] = get(f"G{i + 1}.c.q0")
    sv = np.linalg.svd(T, compute_uv=False)
    if np.any(sv[:, 1] <= ELIMINATION_TOL * sv[:, 0].max()):
        return ComplexForm(False, reason="c-gradient block singular; use the joint real system")
    rhs = np.zeros(3 * n) if rhs is None else np.asarray(rhs, dtype=float)
    psi_g = np.stack([rhs[:n], rhs[n:2 * n]], axis=1)
    Ti = _inv2(T)
    # dc_j = P_jk a^k + p_j c + pi_j
    P = -np.einsum("pji,pik->pjk", Ti, S)
    p = -np.einsum("pji,pi->pj", Ti, s)
    pi = np.einsum("pji,pi->pj", Ti, psi_g)
    d = grid.grad

    # principal part as (row, l, k): coefficient of d_l a^k; zeroth order Z (row, k); E (row)
    prin = np.zeros((n, 2, 2, 2))
    Z = np.zeros((n, 2, 2))
    E = np.zeros((n, 2))
    R = np.zeros((n, 2))

    def add_dc(row, w, l_idx=None):
        """Add w * d_j c (j = l_idx) after substitution."""
        j = l_idx
        Z[:, row] += w[:, None] * P[:, j]
        E[:, row] += w * p[:, j]
        R[:, row] -= w * pi[:, j]

    # row 0: curl, d_2(dc_1) - d_1(dc_2) = 0
    dP = d(P.reshape(n, 4)).reshape(n, 2, 2, 2)   # (p, l, j, k)
    dp = d(p)                                      # (p, l, j)
    dpi = d(pi)
    for k in range(2):
        prin[:, 0, 1, k] += P[:, 0, k]
        prin[:, 0, 0, k] -= P[:, 1, k]
        Z[:, 0, k] += dP[:, 1, 0, k] - dP[:, 0, 1, k]
    E[:, 0] += dp[:, 1, 0] - dp[:, 0, 1]
    R[:, 0] -= dpi[:, 1, 0] - dpi[:, 0, 1]
    add_dc(0, p[:, 0], 1)
    add_dc(0, -p[:, 1], 0)

    # row 1: invariant row
    for k in range(2):
        prin[:, 1, 0, k] += get(f"inv.a{k + 1}.d1")
        prin[:, 1, 1, k] += get(f"inv.a{k + 1}.d2")
        Z[:, 1, k] += get(f"inv.a{k + 1}.q0")
    E[:, 1] += get("inv.c.q0")
    R[:, 1] += rhs[2 * n:]
    for j in range(2):
        add_dc(1, get(f"inv.c.d{j + 1}"), j)
    # second derivatives d_jl c = d_l(dc_j), symmetrized for the mixed term
    for key, pairs in (("d11", ((0, 0),)), ("d22", ((1, 1),)), ("d12", ((0, 1), (1, 0)))):
        w = get(f"inv.c.{key}") / len(pairs)
        for j, l in pairs:
            for k in range(2):
                prin[:, 1, l, k] += w * P[:, j, k]
                Z[:, 1, k] += w * dP[:, l, j, k]
            E[:, 1] += w * dp[:, l, j]
            R[:, 1] -= w * dpi[:, l, j]
            add_dc(1, w * p[:, j], l)
    leftover = max(float(np.abs(get(f"inv.a{k}.{key}")).max())
                   for k in (1, 2) for key in ("d11", "d12", "d22"))

    # target principal parts: div = d1 a1 + d2 a2, curl = d2 a1 - d1 a2
    target = np.zeros((2, 2, 2))
    target[0, 0, 0] = target[0, 1, 1] = 1.0
    target[1, 1, 0] = 1.0
    target[1, 0, 1] = -1.0
    Rm = prin[:, [1, 0]].reshape(n, 2, 4)          # rows (invariant, curl)
    Em = target.reshape(2, 4)
    C = np.einsum("ij,pjk->pik", Em, np.linalg.pinv(Rm))
    fit = np.einsum("pik,pkj->pij", C, Rm) - Em
    scale = np.linalg.norm(Rm, axis=(1, 2))
    fit_res = float(max(np.abs(fit).max(), leftover / max(scale.max(), 1e-300)))
    Zc = np.einsum("pik,pkj->pij", C, Z[:, [1, 0]])
    Ec = np.einsum("pik,pk->pi", C, E[:, [1, 0]])
    Rc = np.einsum("pik,pk->pi", C, R[:, [1, 0]])
    # w = a1 - i a2 = u + i v, equation halves (div + i curl)
    Pu = 0.5 * (Zc[:, 0, 0] + 1j * Zc[:, 1, 0])
    Qv = -0.5 * (Zc[:, 0, 1] + 1j * Zc[:, 1, 1])
    A = 0.5 * (Pu - 1j * Qv)
    B = 0.5 * (Pu + 1j * Qv)
    Ecx = 0.5 * (Ec[:, 0] + 1j * Ec[:, 1])
    psi = 0.5 * (Rc[:, 0] + 1j * Rc[:, 1])
    return ComplexForm(True, A, B, Ecx if include_e else np.zeros(n, complex), psi,
                       None if bc is None else bc.lam.copy(),
                       None if bc is None else bc.phi_rate.copy(), fit_res)


def to_complex_form(sys: LinearSystem, include_e=True) -> ComplexForm:
    n = sys.problem.size
    return complex_form_from_coefficients(coefficient_report(sys), sys.problem.grid,
                                          sys.rhs[:3 * n], sys.bc, include_e)
