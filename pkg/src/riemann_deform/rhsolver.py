"""Least-squares solution of discretized Riemann-Hilbert systems with kernel detection.

The stacked system M x = b (interior rows, boundary rows, point constraints)
is row-equilibrated, then the smallest singular triplets are found by
Lanczos on (M^T M + mu I)^{-1} and refined by a Rayleigh-Ritz step.  The
kernel dimension is the position of the largest relative gap among the
singular values below ``tau_kernel * ||M||``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .grid import PolarGrid

log = logging.getLogger(__name__)

GAP_MIN = 1e3
NOISE_FLOOR = 1e-13


class PhaseResolutionError(ValueError):
    """Boundary phase under-resolved."""


class IndeterminateKernel(RuntimeError):
    """No confident spectral gap below the kernel threshold."""

    def __init__(self, msg, spectrum=None):
        super().__init__(msg)
        self.spectrum = spectrum


def compute_index(lam) -> int:
    """Winding number of the closed boundary curve ``lam`` (samples in theta order)."""
    lam = np.asarray(lam, dtype=complex)
    if lam.ndim != 1 or lam.size < 3:
        raise ValueError("need at least three boundary samples")
    if np.any(np.abs(lam) < 1e-12):
        raise ValueError("boundary coefficient vanishes; index undefined")
    steps = np.angle(np.roll(lam, -1) / lam)
    if np.any(np.abs(steps) >= np.pi / 2):
        raise PhaseResolutionError("boundary phase under-resolved: increase N_theta")
    total = steps.sum() / (2 * np.pi)
    n = int(np.rint(total))
    if abs(total - n) > 1e-6:
        raise PhaseResolutionError("phase increments do not close; increase N_theta")
    return n


# -- systems ------------------------------------------------------------------

@dataclass(eq=False)
class RHSystem:
    """Stacked sparse system with row-block and unknown-layout bookkeeping.

    ``layout`` maps an unknown name (e.g. ``'a1'``, ``'minus.c'``) to a slice
    of the solution vector; ``rows`` maps row-block names to slices.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    rows: dict
    layout: dict
    index: int | None = None
    grids: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m, n = self.matrix.shape
        if self.rhs.shape != (m,):
            raise ValueError("rhs length does not match the number of rows")
        covered = sum(s.stop - s.start for s in self.rows.values())
        if covered != m:
            raise ValueError("row blocks do not cover the matrix")
        if sum(s.stop - s.start for s in self.layout.values()) != n:
            raise ValueError("unknown layout does not cover the columns")

    def with_rhs(self, rhs) -> "RHSystem":
        return RHSystem(self.matrix, np.asarray(rhs, dtype=float), self.rows, self.layout,
                        self.index, self.grids, dict(self.meta))


def from_linear_system(lin) -> RHSystem:
    """Wrap a linearize.LinearSystem."""
    n = lin.problem.size
    layout = {"a1": slice(0, n), "a2": slice(n, 2 * n), "c": slice(2 * n, 3 * n)}
    return RHSystem(lin.matrix, lin.rhs, dict(lin.rows), layout, lin.index, (lin.problem.grid,),
                    {"kind": lin.kind.value, "fix_point": lin.fix_point})


@dataclass(eq=False)
class RHSolution:
    x: np.ndarray
    kernel: np.ndarray           # (n_unknowns, kernel_dim), orthonormal columns
    spectrum: np.ndarray         # smallest relative singular values, ascending
    kernel_dim: int
    gap_ratio: float
    norm: float                  # ||M|| of the equilibrated matrix
    residuals: dict              # block name -> normalized residual
    system: RHSystem = field(repr=False)

    def fields(self, vec=None) -> dict:
        vec = self.x if vec is None else vec
        return {k: vec[s] for k, s in self.system.layout.items()}

    def kernel_fields(self) -> list:
        return [self.fields(self.kernel[:, i]) for i in range(self.kernel_dim)]

    @property
    def interior_residual(self):
        return self.residuals.get("interior", 0.0)

    @property
    def boundary_residual(self):
        return self.residuals.get("boundary", 0.0)


# -- factorization ----------------------------------------------------------------

class _SPDFactor:
    """Factor of a sparse SPD matrix; MKL Pardiso when available, SuperLU otherwise."""

    def __init__(self, A: sp.csr_matrix):
        self.A = A
        self.backend = None
        try:
            import pypardiso

            self._ps = pypardiso.PyPardisoSolver(mtype=2)
            self._ps.set_iparm(34, 1)  # conditional numerical reproducibility
            self._Au = sp.triu(A, format="csr")
            self._Au.sort_indices()
            self._ps.factorize(self._Au)
            self.backend = "pardiso"
        except Exception as exc:  # missing MKL runtime, import failure, ...
            log.debug("pardiso unavailable (%s); using SuperLU", exc)
            self._lu = spl.splu(A.tocsc(), permc_spec="MMD_AT_PLUS_A",
                                options=dict(SymmetricMode=True))
            self.backend = "superlu"

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.backend == "pardiso":
            return self._ps.solve(self._Au, np.ascontiguousarray(b))
        return self._lu.solve(b)

    def __del__(self):
        # Pardiso keeps its factor in MKL-owned memory until told to release it
        if getattr(self, "backend", None) == "pardiso":
            try:
                self._ps.free_memory(everything=True)
            except Exception:
                pass


def _equilibrate(M: sp.csr_matrix):
    norms = np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel())
    scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
    return sp.diags(scale) @ M, scale


def _norm2(M, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(60):
        w = M.T @ (M @ v)
        s_new = np.sqrt(np.linalg.norm(w))
        v = w / np.linalg.norm(w)
        if abs(s_new - s) <= 1e-6 * s_new:
            break
        s = s_new
    return float(s_new)


def _canonical_basis(K: np.ndarray) -> np.ndarray:
    """Reproducible orthonormal basis of span(K) with sign convention."""
    k = K.shape[1]
    if k == 0:
        return K
    _, _, piv = sla.qr(K.T, mode="economic", pivoting=True)
    B = K @ K[piv[:k]].T          # projections of the pivot unit vectors
    Q, _ = np.linalg.qr(B)
    for i in range(k):
        j = np.argmax(np.abs(Q[:, i]))
        if Q[j, i] < 0:
            Q[:, i] = -Q[:, i]
    return Q


def smallest_singular(Ms: sp.csr_matrix, n_tail=12, mu_rel=1e-14, seed=0, factor=None):
    """Smallest singular values and right vectors of Ms (values ascending)."""
    n = Ms.shape[1]
    A = (Ms.T @ Ms).tocsr()
    nrm = _norm2(Ms, seed)
    mu = mu_rel * nrm**2
    A = (A + mu * sp.eye(n, format="csr")).tocsr()
    fac = factor or _SPDFactor(A)
    k = min(n_tail, n - 2)
    op = spl.LinearOperator((n, n), matvec=fac.solve, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    _, V = spl.eigsh(op, k=k, which="LM", v0=v0, tol=1e-12, ncv=min(n, max(2 * k + 1, 40)))
    # Rayleigh-Ritz on the Krylov block
    _, s, wt = np.linalg.svd(Ms @ V, full_matrices=False)
    V = V @ wt.T
    order = np.argsort(s)
    return s[order], V[:, order], nrm, fac, mu


def kernel_dimension(rel, tau):
    """Largest-gap rule on relative singular values ``rel`` (ascending)."""
    cand = int(np.sum(rel <= tau))
    if cand >= len(rel):
        raise IndeterminateKernel(
            f"all {len(rel)} computed singular values lie below tau={tau:g}; kernel too large",
            rel)
    padded = np.concatenate([[NOISE_FLOOR], np.maximum(rel, NOISE_FLOOR)])
    ratios = padded[1:cand + 2] / padded[:cand + 1]
    dim = int(np.argmax(ratios))
    return dim, float(ratios[dim])


def solve(system: RHSystem, tau_kernel=1e-7, n_tail=12, seed=0, gap_min=GAP_MIN,
          raise_indeterminate=True, equilibrate=True) -> RHSolution:
    """Least-squares particular solution, kernel basis and residual report."""
    if equilibrate:
        Ms, scale = _equilibrate(system.matrix.tocsr())
    else:
        Ms, scale = system.matrix.tocsr(), np.ones(system.matrix.shape[0])
    bs = scale * system.rhs
    s, V, nrm, fac, mu = smallest_singular(Ms, n_tail, seed=seed)
    rel = s / nrm
    dim, gap = kernel_dimension(rel, tau_kernel)
    if gap < gap_min and raise_indeterminate:
        raise IndeterminateKernel(
            f"indeterminate kernel dimension: best gap ratio {gap:.3g} < {gap_min:g}; "
            f"spectrum tail {np.array2string(rel, precision=3)}", rel)
    K = _canonical_basis(V[:, :dim])

    def project(x):
        return x - K @ (K.T @ x) if dim else x

    x = project(fac.solve(Ms.T @ bs))
    for _ in range(2):
        r = bs - Ms @ x
        x = project(x + fac.solve(Ms.T @ r))
    residuals = block_residuals(system, x)
    return RHSolution(x, K, rel, dim, gap, nrm, residuals, system)


def block_residuals(system: RHSystem, x) -> dict:
    """Sup norm of the unscaled residual on each row block over the sup norm of the data.

    An unscaled interior row is the discrete operator evaluated at a node, so this is the
    discrete C^0 norm of the residual function. Equilibrated or L2 norms discount a defect
    concentrated at one node, which is how a point constraint is violated.
    """
    r = system.matrix @ x - system.rhs
    ref = np.abs(system.rhs).max(initial=0.0)
    ref = ref if ref > 0 else 1.0
    return {name: float(np.abs(r[sl]).max(initial=0.0) / ref) for name, sl in system.rows.items()}


def solvability_residual(sol: RHSolution) -> float:
    """Max over row blocks of the normalized residual."""
    return max(sol.residuals.values()) if sol.residuals else 0.0


def kernel_residuals(sol: RHSolution) -> np.ndarray:
    """||M k|| / ||M|| for each kernel field (equilibrated rows)."""
    Ms, _ = _equilibrate(sol.system.matrix.tocsr())
    return np.array([np.linalg.norm(Ms @ sol.kernel[:, i]) / sol.norm
                     for i in range(sol.kernel_dim)])


def subspace_angle(K: np.ndarray, W: np.ndarray) -> float:
    """Largest principal angle of span(W) to span(K)."""
    if W.shape[1] == 0:
        return 0.0
    if K.shape[1] == 0:
        return np.pi / 2
    return float(sla.subspace_angles(K, W).max())


# -- holomorphic calibration --------------------------------------------------------

def dbar_operator(grid: PolarGrid) -> sp.csr_matrix:
    """Real form of d/dzbar = (d_x + i d_y)/2 acting on stacked (u, v), w = u + i v."""
    Dx, Dy = grid.ops["x"], grid.ops["y"]
    return 0.5 * sp.bmat([[Dx, -Dy], [Dy, Dx]], format="csr")


def holomorphic_system(grid: PolarGrid, n: int, A=None, B=None, psi=None, phi=None,
                       fix_point=None, lam=None) -> RHSystem:
    """System d_zbar w + A w + B conj(w) = psi, Re(conj(lam) w) = phi on |z| = 1.

    ``lam`` defaults to exp(i n theta).  ``fix_point`` adds w(x0) = 0.
    """
    N = grid.size
    D = dbar_operator(grid)
    blocks = [D]
    if A is not None or B is not None:
        A = np.zeros(N, complex) if A is None else np.broadcast_to(np.asarray(A, complex), (N,))
        B = np.zeros(N, complex) if B is None else np.broadcast_to(np.asarray(B, complex), (N,))
        # (A + B) u + i (A - B) v, split into real and imaginary parts
        P, Q = A + B, 1j * (A - B)
        Z = sp.bmat([[sp.diags(P.real), sp.diags(Q.real)],
                     [sp.diags(P.imag), sp.diags(Q.imag)]], format="csr")
        blocks = [D + Z]
    psi = np.zeros(N, complex) if psi is None else np.asarray(psi, complex)
    rhs = [np.concatenate([psi.real, psi.imag])]
    rows = {"interior": slice(0, 2 * N)}
    theta = grid.boundary_theta
    lam = np.exp(1j * n * theta) if lam is None else np.asarray(lam, complex)
    m = grid.n_theta
    bnd = grid.boundary
    Bm = sp.csr_matrix((np.concatenate([lam.real, lam.imag]),
                        (np.tile(np.arange(m), 2), np.concatenate([bnd, N + bnd]))),
                       shape=(m, 2 * N))
    blocks.append(Bm)
    rhs.append(np.zeros(m) if phi is None else np.asarray(phi, float))
    rows["boundary"] = slice(2 * N, 2 * N + m)
    if fix_point is not None:
        fp = int(fix_point)
        blocks.append(sp.csr_matrix((np.ones(2), ([0, 1], [fp, N + fp])), shape=(2, 2 * N)))
        rhs.append(np.zeros(2))
        rows["constraint"] = slice(2 * N + m, 2 * N + m + 2)
    layout = {"u": slice(0, N), "v": slice(N, 2 * N)}
    return RHSystem(sp.vstack(blocks, format="csr"), np.concatenate(rhs), rows, layout,
                    compute_index(lam), (grid,), {"calibration": "holomorphic"})


def holomorphic_kernel_oracle(n: int, fix_value: complex | None = None) -> int:
    """Dimension of {w = sum c_k z^k : Re(conj(e^{i n theta}) w) = 0 on |z| = 1}.

    Counted by brute-force linear algebra on polynomial coefficients.  With
    ``fix_value`` (a point z0 in the disk) the constraint w(z0) = 0 is added.
    """
    if n < 0:
        return 0
    deg = 2 * n + 2  # coefficients above 2n are forced to vanish; one extra as a check
    th = 2 * np.pi * np.arange(8 * deg + 8) / (8 * deg + 8)
    cols = []
    for k in range(deg + 1):
        for unit in (1.0, 1j):
            w = unit * np.exp(1j * k * th)
            cols.append((np.conj(np.exp(1j * n * th)) * w).real)
    C = np.array(cols).T
    if fix_value is not None:
        rows = []
        for k in range(deg + 1):
            for unit in (1.0, 1j):
                rows.append(unit * fix_value**k)
        r = np.array(rows)
        C = np.vstack([C, r.real[None], r.imag[None]])
    s = np.linalg.svd(C, compute_uv=False)
    return int(C.shape[1] - np.sum(s > 1e-9 * s[0]))
