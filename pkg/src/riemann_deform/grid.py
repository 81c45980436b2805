"""Polar sampling of the unit disk and its differentiation operators.

Nodes are one center point followed by ``n_r`` rings of ``n_theta`` points
(ring ``i`` at radius ``i / n_r``).  Tensor components are always Cartesian
(x1, x2); the polar layout only decides where samples live.

Radial derivatives are taken along the full diameter through each node, so
the stencil passes through the center onto the opposite ray.  That keeps
interior stencils centered and makes the origin an ordinary stencil point.
Angular derivatives use periodic centered stencils.  Both use ``order``-th
order finite differences (default 8).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

DERIVS = ("x", "y")
SECOND = ("xx", "xy", "yy")


def fd_weights(offsets, deriv):
    """Finite-difference weights on unit-spaced ``offsets`` for ``deriv``-th derivative at 0."""
    offsets = np.asarray(offsets, dtype=float)
    m = len(offsets)
    vander = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[deriv] = float(np.prod(np.arange(1, deriv + 1)))
    return np.linalg.solve(vander, rhs)


def radial_weights(n, order=8):
    """Weights on r_k = k/n, k = 0..n, for integrals over [0, 1].

    Trapezoid rule with Gregory-type corrections on ``order/2`` nodes at each
    end, fixed by exactness on monomials of degree < ``order``.
    """
    h = 1.0 / n
    w = np.full(n + 1, h)
    w[0] = w[-1] = h / 2
    m = order // 2
    idx = np.concatenate([np.arange(m), np.arange(n + 1 - m, n + 1)])
    nodes = idx * h
    deg = np.arange(2 * m)
    exact = 1.0 / (deg + 1)
    full = (np.linspace(0, 1, n + 1)[None, :] ** deg[:, None]) @ w
    corr = np.linalg.solve(nodes[None, :] ** deg[:, None], exact - full)
    w[idx] += corr
    return w


@dataclass(frozen=True)
class PolarGrid:
    n_r: int
    n_theta: int
    order: int = 8

    def __post_init__(self):
        if self.n_r < 8:
            raise ValueError(f"n_r must be >= 8, got {self.n_r}")
        if self.n_theta < 16 or self.n_theta % 2:
            raise ValueError(f"n_theta must be even and >= 16, got {self.n_theta}")
        if self.order % 2 or self.order < 2:
            raise ValueError("order must be a positive even integer")
        if self.order + 1 > 2 * self.n_r + 1:
            raise ValueError("stencil wider than the diameter")

    @classmethod
    def parse(cls, text: str, order: int = 8) -> "PolarGrid":
        n_r, n_t = text.lower().split("x")
        return cls(int(n_r), int(n_t), order)

    def __str__(self):
        return f"{self.n_r}x{self.n_theta}"

    @property
    def size(self) -> int:
        return 1 + self.n_r * self.n_theta

    @property
    def h(self) -> float:
        """Radial spacing, used as the grid scale."""
        return 1.0 / self.n_r

    @cached_property
    def r(self) -> np.ndarray:
        rings = np.arange(1, self.n_r + 1) / self.n_r
        return np.concatenate([[0.0], np.repeat(rings, self.n_theta)])

    @cached_property
    def theta(self) -> np.ndarray:
        th = 2 * np.pi * np.arange(self.n_theta) / self.n_theta
        return np.concatenate([[0.0], np.tile(th, self.n_r)])

    @cached_property
    def x(self) -> np.ndarray:
        """Cartesian coordinates, shape (size, 2)."""
        return np.stack([self.r * np.cos(self.theta), self.r * np.sin(self.theta)], axis=1)

    @cached_property
    def boundary(self) -> np.ndarray:
        """Indices of the r = 1 ring, ordered by increasing theta."""
        return self.index(self.n_r, np.arange(self.n_theta))

    @cached_property
    def boundary_theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    def index(self, ring, j):
        ring = np.asarray(ring)
        j = np.asarray(j) % self.n_theta
        return np.where(ring == 0, 0, 1 + (ring - 1) * self.n_theta + j)

    def nearest(self, point) -> int:
        d = np.linalg.norm(self.x - np.asarray(point, dtype=float), axis=1)
        return int(np.argmin(d))

    # -- quadrature -------------------------------------------------------
    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights for integrals over the disk in dx1 dx2.

        Periodic trapezoid in theta (spectral) times an endpoint-corrected
        trapezoid rule in r, exact for polynomials of degree < ``order``.
        """
        dth = 2 * np.pi / self.n_theta
        wr = radial_weights(self.n_r, self.order)
        radii = np.arange(self.n_r + 1) * self.h
        w = np.zeros(self.size)
        w[1:] = np.repeat((wr * radii)[1:] * dth, self.n_theta)
        # the center contributes r * f = 0
        return w

    # -- 1-D building blocks ---------------------------------------------
    def _line_stencils(self, deriv):
        """Stencils along the diameter for positions k = 0..n_r (in units of h)."""
        p = self.order
        half = p // 2
        out = []
        for k in range(self.n_r + 1):
            lo = min(max(k - half, -self.n_r), self.n_r - p)
            ks = np.arange(lo, lo + p + 1)
            out.append((ks, fd_weights(ks - k, deriv)))
        return out

    def _line_node(self, k, j):
        """Node index at signed diameter position k on the line through angle j."""
        k = np.asarray(k)
        jj = np.where(k < 0, j + self.n_theta // 2, j)
        return self.index(np.abs(k), jj)

    def _radial_op(self, deriv):
        """d^deriv/dr^deriv at every r > 0 node (center row left empty)."""
        h = self.h
        rows, cols, vals = [], [], []
        stencils = self._line_stencils(deriv)
        js = np.arange(self.n_theta)
        for k in range(1, self.n_r + 1):
            ks, wts = stencils[k]
            row = self.index(k, js)
            for kk, wt in zip(ks, wts):
                rows.append(row)
                cols.append(self._line_node(kk, js))
                vals.append(np.full(self.n_theta, wt / h**deriv))
        return self._coo(rows, cols, vals)

    def _angular_op(self, deriv):
        dth = 2 * np.pi / self.n_theta
        half = self.order // 2
        offs = np.arange(-half, half + 1)
        wts = fd_weights(offs, deriv) / dth**deriv
        rows, cols, vals = [], [], []
        js = np.arange(self.n_theta)
        for k in range(1, self.n_r + 1):
            row = self.index(k, js)
            for o, wt in zip(offs, wts):
                rows.append(row)
                cols.append(self.index(k, js + o))
                vals.append(np.full(self.n_theta, wt))
        return self._coo(rows, cols, vals)

    def _center_rows(self, deriv):
        """Directional derivatives at the center along each distinct diameter.

        Returns an (n_theta/2, size) sparse matrix; row j is the derivative along
        angle pi*j/(n_theta/2).
        """
        ks, wts = self._line_stencils(deriv)[0]
        h = self.h
        m = self.n_theta // 2
        rows, cols, vals = [], [], []
        js = np.arange(m)
        for kk, wt in zip(ks, wts):
            rows.append(js)
            cols.append(self._line_node(kk, js))
            vals.append(np.full(m, wt / h**deriv))
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m, self.size),
        ).tocsr()

    def _coo(self, rows, cols, vals):
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.size, self.size),
        ).tocsr()

    # -- Cartesian operators ---------------------------------------------
    @cached_property
    def ops(self) -> dict:
        """Sparse operators {'x','y','xx','xy','yy','r','theta'} acting on node values."""
        Dr = self._radial_op(1)
        Drr = self._radial_op(2)
        Dt = self._angular_op(1)
        Dtt = self._angular_op(2)
        Drt = (Dr @ Dt).tocsr()  # center row of Dt is empty, i.e. f_theta(0) = 0

        r = self.r.copy()
        r[0] = 1.0
        c, s = np.cos(self.theta), np.sin(self.theta)
        inv_r, inv_r2 = 1.0 / r, 1.0 / r**2
        diag = sp.diags

        Dx = diag(c) @ Dr - diag(s * inv_r) @ Dt
        Dy = diag(s) @ Dr + diag(c * inv_r) @ Dt
        Dxx = (diag(c * c) @ Drr + diag(s * s * inv_r) @ Dr + diag(s * s * inv_r2) @ Dtt
               - diag(2 * s * c * inv_r) @ Drt + diag(2 * s * c * inv_r2) @ Dt)
        Dyy = (diag(s * s) @ Drr + diag(c * c * inv_r) @ Dr + diag(c * c * inv_r2) @ Dtt
               + diag(2 * s * c * inv_r) @ Drt - diag(2 * s * c * inv_r2) @ Dt)
        Dxy = (diag(s * c) @ Drr - diag(s * c * inv_r) @ Dr - diag(s * c * inv_r2) @ Dtt
               + diag((c * c - s * s) * inv_r) @ Drt - diag((c * c - s * s) * inv_r2) @ Dt)

        # center: least-squares fit of the Cartesian derivatives to the
        # directional derivatives along every diameter
        m = self.n_theta // 2
        ang = np.pi * np.arange(m) / m
        ca, sa = np.cos(ang), np.sin(ang)
        first = np.linalg.pinv(np.stack([ca, sa], axis=1))
        second = np.linalg.pinv(np.stack([ca * ca, 2 * ca * sa, sa * sa], axis=1))
        C1 = self._center_rows(1)
        C2 = self._center_rows(2)
        center = {
            "x": sp.csr_matrix(first[0] @ C1),
            "y": sp.csr_matrix(first[1] @ C1),
            "xx": sp.csr_matrix(second[0] @ C2),
            "xy": sp.csr_matrix(second[1] @ C2),
            "yy": sp.csr_matrix(second[2] @ C2),
        }
        out = {"x": Dx, "y": Dy, "xx": Dxx, "xy": Dxy, "yy": Dyy}
        for key, op in out.items():
            op = op.tolil()
            op[0, :] = center[key]
            out[key] = op.tocsr()
            out[key].eliminate_zeros()
        # radial derivative along the outward ray; only meaningful for r > 0
        out["r"] = Dr
        out["theta"] = Dt
        return out

    def grad(self, f: np.ndarray) -> np.ndarray:
        """First Cartesian derivatives of node values: shape f.shape[:1] + (2,) + f.shape[1:]."""
        return np.stack([self.ops["x"] @ f, self.ops["y"] @ f], axis=1)

    def hessian(self, f: np.ndarray) -> np.ndarray:
        """Second derivatives ordered (11, 12, 22)."""
        return np.stack([self.ops[k] @ f for k in SECOND], axis=1)
