"""Disk-type immersions, fundamental forms, curvatures and deformation fields.

Charts are written symbolically and differentiated with sympy, so the base
derivative grids are exact.  Deformed immersions add grid derivatives of the
accumulated displacement ``z`` to the chart derivatives.

Sign convention: ``b_ij = -a(nabla_i y_{,j}, n)`` and ``n`` is oriented so
that ``H > 0``.  For a round sphere that is the outward normal, so a normal
displacement ``c > 0`` grows the sphere.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
import sympy

from .ambient import MetricField, christoffel_at, metric_at
from .grid import PolarGrid

CHART_KINDS = (
    "stereographic_sphere",
    "spherical_cap",
    "orthographic_cap",
    "plane",
    "custom",
)

SECOND_IDX = ((0, 0), (0, 1), (1, 1))
THIRD_IDX = ((0, 0, 0), (0, 0, 1), (0, 1, 1), (1, 1, 1))


class SurfaceError(ValueError):
    """Degenerate chart or immersion."""


class NotAdmitted(SurfaceError):
    """Surface fails the positivity requirements (k1, k2, H > 0)."""


# -- charts --------------------------------------------------------------

_X1, _X2 = sympy.symbols("x1 x2", real=True)


@dataclass(frozen=True)
class Chart:
    """Analytic chart y(x1, x2) of the closed unit disk.

    ``params`` is a tuple of (name, value) pairs so the chart stays hashable.
    """

    kind: str
    params: tuple = ()

    @classmethod
    def make(cls, kind: str, **params) -> "Chart":
        if kind not in CHART_KINDS:
            raise SurfaceError(f"unknown chart kind {kind!r}")
        chart = cls(kind, tuple(sorted((k, _freeze(v)) for k, v in params.items())))
        chart.expressions  # validate parameters early
        return chart

    @classmethod
    def from_config(cls, cfg: dict) -> "Chart":
        cfg = dict(cfg)
        return cls.make(cfg.pop("kind"), **cfg)

    def to_config(self) -> dict:
        out = {"kind": self.kind}
        for k, v in self.params:
            out[k] = list(v) if isinstance(v, tuple) else v
        return out

    @property
    def p(self) -> dict:
        return dict(self.params)

    @cached_property
    def expressions(self):
        p = self.p
        x1, x2 = _X1, _X2
        center = sympy.Matrix(p.get("center", (0.0, 0.0, 0.0)))
        if self.kind in ("stereographic_sphere", "spherical_cap", "orthographic_cap"):
            R = float(p.get("R", 1.0))
            if R <= 0:
                raise SurfaceError("radius R must be positive")
        if self.kind in ("spherical_cap", "orthographic_cap"):
            rho = float(p.get("rho", np.pi / 4))
            if not 0 < rho < np.pi / 2:
                raise SurfaceError("cap extent rho must lie in (0, pi/2)")

        if self.kind == "stereographic_sphere":
            hemi = p.get("hemisphere", "south")
            if hemi not in ("south", "north"):
                raise SurfaceError("hemisphere must be 'south' or 'north'")
            q = x1**2 + x2**2
            sgn = 1 if hemi == "south" else -1
            y = sympy.Matrix([2 * x1, 2 * x2, sgn * (q - 1)]) * R / (1 + q)
        elif self.kind == "spherical_cap":
            s = sympy.tan(sympy.Float(rho) / 2)
            u1, u2 = s * x1, s * x2
            q = u1**2 + u2**2
            y = sympy.Matrix([2 * u1, 2 * u2, q - 1]) * R / (1 + q)
        elif self.kind == "orthographic_cap":
            s = R * sympy.sin(sympy.Float(rho))
            y = sympy.Matrix([s * x1, s * x2, -sympy.sqrt(R**2 - s**2 * (x1**2 + x2**2))])
        elif self.kind == "plane":
            y = sympy.Matrix([x1, x2, 0])
        else:
            exprs = p.get("expressions")
            if exprs is None or len(exprs) != 3:
                raise SurfaceError("custom chart needs three expressions in x1, x2")
            local = {"x1": x1, "x2": x2}
            try:
                y = sympy.Matrix([sympy.sympify(e, locals=local) for e in exprs])
            except (sympy.SympifyError, TypeError) as exc:
                raise SurfaceError(f"cannot parse chart expressions: {exc}") from exc
            extra = y.free_symbols - {x1, x2}
            if extra:
                raise SurfaceError(f"unknown symbols in chart: {sorted(map(str, extra))}")
        return y + center

    @cached_property
    def _functions(self):
        y = self.expressions
        xs = (_X1, _X2)
        d1 = [[sympy.diff(y[a], xs[i]) for a in range(3)] for i in range(2)]
        d2 = [[sympy.diff(y[a], xs[i], xs[j]) for a in range(3)] for i, j in SECOND_IDX]
        d3 = [[sympy.diff(y[a], xs[i], xs[j], xs[k]) for a in range(3)] for i, j, k in THIRD_IDX]
        lam = lambda rows: [[sympy.lambdify(xs, e, "numpy") for e in row] for row in rows]
        return lam([list(y)]), lam(d1), lam(d2), lam(d3)

    def evaluate(self, x: np.ndarray):
        """Return y (N,3), dy (N,2,3), d2y (N,3,3), d3y (N,4,3) at points x (N,2)."""
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1]
        out = []
        for rows in self._functions:
            arr = np.empty(shape + (len(rows), 3))
            for i, row in enumerate(rows):
                for a, fn in enumerate(row):
                    arr[..., i, a] = np.broadcast_to(fn(x[..., 0], x[..., 1]), shape)
            out.append(arr)
        return out[0][..., 0, :], out[1], out[2], out[3]


def _freeze(v):
    if isinstance(v, (list, tuple)):
        return tuple(_freeze(e) for e in v)
    return v


# -- immersions ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Immersion:
    """Sampled immersion of the unit disk: positions and derivative grids."""

    grid: PolarGrid
    y: np.ndarray
    dy: np.ndarray
    d2y: np.ndarray
    d3y: np.ndarray | None = None
    chart: Chart | None = None
    orientation: int = 0  # 0 = not fixed yet; +1/-1 once forms were computed
    t: float = 0.0

    def with_orientation(self, sign: int) -> "Immersion":
        return replace(self, orientation=int(sign))


def _check_rank(dy, what="chart"):
    cross = np.cross(dy[:, 0], dy[:, 1])
    scale = np.linalg.norm(dy[:, 0], axis=1) * np.linalg.norm(dy[:, 1], axis=1)
    bad = np.linalg.norm(cross, axis=1) <= 1e-10 * np.maximum(scale, 1e-300)
    if np.any(bad):
        raise SurfaceError(f"{what} has Jacobian rank < 2 at {int(bad.sum())} grid points")


def build_immersion(chart: Chart, grid: PolarGrid) -> Immersion:
    y, dy, d2y, d3y = chart.evaluate(grid.x)
    _check_rank(dy)
    return Immersion(grid=grid, y=y, dy=dy, d2y=d2y, d3y=d3y, chart=chart)


@dataclass(frozen=True, eq=False)
class DeformationField:
    """Coefficients (a^1, a^2, c) in the base frame and the displacement they define."""

    a: np.ndarray  # (N, 2)
    c: np.ndarray  # (N,)
    z: np.ndarray  # (N, 3)

    @classmethod
    def zero(cls, n_points: int) -> "DeformationField":
        return cls(np.zeros((n_points, 2)), np.zeros(n_points), np.zeros((n_points, 3)))

    @classmethod
    def from_coefficients(cls, a, c, base: "FundamentalForms") -> "DeformationField":
        a = np.asarray(a, dtype=float)
        c = np.asarray(c, dtype=float)
        z = np.einsum("pj,pja->pa", a, base.dy) + c[:, None] * base.n
        return cls(a, c, z)

    @classmethod
    def from_displacement(cls, z, base: "FundamentalForms") -> "DeformationField":
        """Decompose an ambient displacement on the frame {y_1, y_2, n}."""
        z = np.asarray(z, dtype=float)
        frame = np.concatenate([base.dy, base.n[:, None, :]], axis=1)  # (N, 3, 3) rows = vectors
        coef = np.linalg.solve(np.swapaxes(frame, 1, 2), z[..., None])[..., 0]
        return cls(coef[:, :2], coef[:, 2], np.einsum("pk,pka->pa", coef, frame))

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.a[:, 0], self.a[:, 1], self.c])

    def __add__(self, other: "DeformationField") -> "DeformationField":
        return DeformationField(self.a + other.a, self.c + other.c, self.z + other.z)

    def scaled(self, s: float) -> "DeformationField":
        return DeformationField(s * self.a, s * self.c, s * self.z)


def deform_immersion(base: Immersion, field: DeformationField, t: float | None = None) -> Immersion:
    """Immersion y + z with derivatives from the chart plus grid derivatives of z."""
    if field.z.shape != base.y.shape:
        raise SurfaceError("deformation field does not match the immersion grid")
    grid = base.grid
    dy = base.dy + grid.grad(field.z)
    d2y = base.d2y + grid.hessian(field.z)
    _check_rank(dy, "deformed immersion (deformation too large)")
    return Immersion(grid=grid, y=base.y + field.z, dy=dy, d2y=d2y, d3y=None,
                     chart=base.chart, orientation=base.orientation,
                     t=base.t if t is None else float(t))


# -- pointwise geometry ------------------------------------------------------

def unit_normal(metric: MetricField, y, dy, orientation=1):
    """Unit normal (metric sense) to the tangent plane spanned by dy[..., 0, :], dy[..., 1, :]."""
    amb = metric_at(metric, y)
    nu = np.cross(dy[..., 0, :], dy[..., 1, :])  # covector eps_abc Y1^b Y2^c
    n = np.linalg.solve(amb, nu[..., None])[..., 0]
    norm = np.sqrt(np.einsum("...ab,...a,...b->...", amb, n, n))
    return orientation * n / norm[..., None], amb


def principal_curvatures(g, b, tol=1e-9):
    """Principal curvatures k1 <= k2 of the pencil (b, g), with H and K.

    Accepts arrays of shape (..., 2, 2).  Raises if H^2 < K beyond ``tol``
    (relative), which can only happen through inconsistent inputs.
    """
    g = np.asarray(g, dtype=float)
    b = np.asarray(b, dtype=float)
    det_g = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    tr = g[..., 1, 1] * b[..., 0, 0] + g[..., 0, 0] * b[..., 1, 1] - g[..., 0, 1] * b[..., 1, 0] \
        - g[..., 1, 0] * b[..., 0, 1]
    H = 0.5 * tr / det_g
    K = (b[..., 0, 0] * b[..., 1, 1] - b[..., 0, 1] * b[..., 1, 0]) / det_g
    disc = H * H - K
    scale = np.maximum(H * H, np.abs(K))
    if np.any(disc < -tol * np.maximum(scale, 1e-300)):
        raise SurfaceError("internal inconsistency: H^2 < K")
    root = np.sqrt(np.clip(disc, 0, None))
    return H - root, H + root, H, K


@dataclass(frozen=True, eq=False)
class FundamentalForms:
    g: np.ndarray        # (N, 2, 2)
    b: np.ndarray        # (N, 2, 2)
    det_g: np.ndarray
    n: np.ndarray        # (N, 3)
    H: np.ndarray
    K: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    sqrt_g: np.ndarray
    dy: np.ndarray       # tangent vectors y_{,i}, (N, 2, 3)
    orientation: int

    @property
    def V(self) -> np.ndarray:
        return 0.5 * (self.b[:, 0, 0] + self.b[:, 1, 1])

    @property
    def sum_of_radii(self) -> np.ndarray:
        return 2 * self.H / self.K


def pointwise_forms(metric: MetricField, y, dy, d2y, orientation=1):
    """g, b, n, H, K, k1, k2 and sqrt(g) at every sample (no admittance check)."""
    n, amb = unit_normal(metric, y, dy, orientation)
    g = np.einsum("...ab,...ia,...jb->...ij", amb, dy, dy)
    hess = np.empty(dy.shape[:-2] + (2, 2, 3))
    for k, (i, j) in enumerate(SECOND_IDX):
        hess[..., i, j, :] = d2y[..., k, :]
        hess[..., j, i, :] = d2y[..., k, :]
    if not metric.is_flat:
        gam = christoffel_at(metric, y)
        hess = hess + np.einsum("...abc,...ib,...jc->...ija", gam, dy, dy)
    b = -np.einsum("...ab,...ija,...b->...ij", amb, hess, n)
    k1, k2, H, K = principal_curvatures(g, b)
    det_g = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    return dict(g=g, b=b, det_g=det_g, n=n, H=H, K=K, k1=k1, k2=k2, sqrt_g=np.sqrt(det_g))


def fundamental_forms(im: Immersion, metric: MetricField, admit: bool = True) -> FundamentalForms:
    """First and second fundamental forms with the normal oriented so that H > 0.

    With ``admit`` the surface must have k1, k2 > 0 everywhere; otherwise
    :class:`NotAdmitted` is raised.  Pass ``admit=False`` for diagnostics on
    flat or saddle-shaped test surfaces.
    """
    sign = im.orientation or 1
    f = pointwise_forms(metric, im.y, im.dy, im.d2y, sign)
    if not im.orientation and np.mean(f["H"]) < 0:
        sign = -1
        f = pointwise_forms(metric, im.y, im.dy, im.d2y, sign)
    if admit:
        if np.any(f["H"] <= 0) or np.any(f["k1"] <= 0):
            worst = int(np.argmin(f["k1"]))
            raise NotAdmitted(
                f"surface not admitted: min k1 = {f['k1'].min():.3g}, min H = {f['H'].min():.3g} "
                f"(first failure near x = {np.round(im.grid.x[worst], 4).tolist()})")
    return FundamentalForms(dy=im.dy, orientation=sign, **f)


def verify_conjugate_isothermal(forms: FundamentalForms, tol: float = 1e-8) -> dict:
    """Check b_12 = 0 and b_11 = b_22 relative to max |V|."""
    b = forms.b
    V = forms.V
    off = float(np.abs(b[:, 0, 1]).max())
    diff = float(np.abs(b[:, 0, 0] - b[:, 1, 1]).max())
    scale = float(np.abs(V).max())
    return {
        "max_b12": off,
        "max_b11_minus_b22": diff,
        "V": V,
        "passed": bool(off <= tol * scale and diff <= tol * scale),
    }


def area_element(forms: FundamentalForms, grid: PolarGrid):
    """Area density sqrt(g) and the total area by trapezoid quadrature."""
    return forms.sqrt_g, float(grid.weights @ forms.sqrt_g)


# -- export ------------------------------------------------------------------

CSV_COLUMNS = ("r", "theta", "y1", "y2", "y3", "H", "K", "k1", "k2", "sqrt_g")


def forms_csv(im: Immersion, forms: FundamentalForms) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    cols = np.column_stack([im.grid.r, im.grid.theta, im.y, forms.H, forms.K,
                            forms.k1, forms.k2, forms.sqrt_g])
    for row in cols:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def forms_summary(forms: FundamentalForms) -> dict:
    out = {}
    for name in ("H", "K", "k1", "k2", "sqrt_g"):
        arr = getattr(forms, name)
        out[name] = {"min": float(arr.min()), "max": float(arr.max()), "mean": float(arr.mean())}
    return out
