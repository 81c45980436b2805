"""Ambient Riemannian 3-space: metric, its derivatives, Christoffel symbols, transport.

All evaluation functions broadcast over leading axes of ``y`` (shape ``(..., 3)``).
Index conventions::

    metric_at(m, y)[..., a, b]                   = a_ab(y)
    metric_derivatives_at(m, y)[0][..., a, b, g] = d_g a_ab
    metric_derivatives_at(m, y)[1][..., a, b, g, d] = d_g d_d a_ab
    christoffel_at(m, y)[..., a, b, g]           = Gamma^a_bg
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

WORKING_RADIUS = 8.0

KINDS = ("euclidean", "constant_curvature", "custom")


class MetricError(ValueError):
    """Invalid metric specification or evaluation outside the working region."""


@dataclass(frozen=True)
class MetricField:
    """Ambient metric family.

    ``coeffs`` (custom kind only) maps a component key such as ``"11"`` or
    ``"23"`` to a list of ``[value, e1, e2, e3]`` monomial terms
    ``value * y1**e1 * y2**e2 * y3**e3`` with total degree at most 4.
    Components not listed keep their Euclidean value.
    """

    kind: str = "euclidean"
    kappa: float = 0.0
    coeffs: tuple = ()
    bound: float = 100.0
    check: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MetricError(f"unknown metric kind {self.kind!r}")
        if self.bound <= 0:
            raise MetricError("metric bound M0 must be positive")
        if self.kind == "custom" and self.check:
            _validate_custom(self)

    @classmethod
    def euclidean(cls, bound=100.0):
        return cls("euclidean", bound=bound)

    @classmethod
    def constant_curvature(cls, kappa, bound=100.0):
        kappa = float(kappa)
        if kappa < 0 and WORKING_RADIUS ** 2 * abs(kappa) / 4 >= 1:
            raise MetricError(
                f"kappa={kappa} makes the conformal factor vanish inside |y| <= {WORKING_RADIUS}")
        return cls("constant_curvature", kappa=kappa, bound=bound)

    @classmethod
    def custom(cls, coeffs: dict, bound=100.0, check=True):
        """Polynomial metric; ``check=False`` skips the positive-definiteness scan of the ball."""
        terms = []
        for key, monos in coeffs.items():
            a, b = _component(key)
            for mono in monos:
                value, *exps = mono
                if len(exps) != 3 or any(int(e) != e or e < 0 for e in exps):
                    raise MetricError(f"bad monomial {mono!r} in component {key}")
                if sum(exps) > 4:
                    raise MetricError(f"monomial {mono!r} exceeds total degree 4")
                terms.append((a, b, float(value), tuple(int(e) for e in exps)))
        return cls("custom", coeffs=tuple(terms), bound=bound, check=check)

    @classmethod
    def from_config(cls, cfg: dict) -> "MetricField":
        kind = cfg.get("kind", "euclidean")
        bound = float(cfg.get("bound", 100.0))
        if kind == "euclidean":
            return cls.euclidean(bound)
        if kind == "constant_curvature":
            return cls.constant_curvature(cfg["kappa"], bound)
        if kind == "custom":
            return cls.custom(cfg["coeffs"], bound)
        raise MetricError(f"unknown metric kind {kind!r}")

    def to_config(self) -> dict:
        out = {"kind": self.kind, "bound": self.bound}
        if self.kind == "constant_curvature":
            out["kappa"] = self.kappa
        if self.kind == "custom":
            table: dict = {}
            for a, b, value, exps in self.coeffs:
                table.setdefault(f"{a + 1}{b + 1}", []).append([value, *exps])
            out["coeffs"] = table
        return out

    @property
    def is_flat(self) -> bool:
        return self.kind == "euclidean" or (self.kind == "constant_curvature" and self.kappa == 0)


def _component(key: str):
    if len(key) != 2 or not set(key) <= set("123"):
        raise MetricError(f"bad metric component key {key!r}")
    a, b = sorted((int(key[0]) - 1, int(key[1]) - 1))
    return a, b


def _lattice(n=17):
    s = np.linspace(-WORKING_RADIUS, WORKING_RADIUS, n)
    pts = np.array(list(itertools.product(s, s, s)))
    return pts[np.linalg.norm(pts, axis=1) <= WORKING_RADIUS + 1e-12]


def _validate_custom(metric: MetricField):
    pts = _lattice()
    eig = np.linalg.eigvalsh(_custom_eval(metric, pts, 0))
    bad = np.nonzero(eig[:, 0] <= 0)[0]
    if bad.size:
        y = pts[bad[0]]
        raise MetricError(
            "metric not positive definite at y=({:.3g}, {:.3g}, {:.3g})".format(*y))


def _check_region(y):
    r = np.linalg.norm(y, axis=-1)
    if np.any(r > WORKING_RADIUS * (1 + 1e-12)):
        raise MetricError(f"point outside working region |y| <= {WORKING_RADIUS}")


def _mono_deriv(e, order_idx):
    """Coefficient and exponents after differentiating y^e by the listed axes."""
    e = list(e)
    coef = 1.0
    for ax in order_idx:
        coef *= e[ax]
        e[ax] -= 1
        if coef == 0:
            return 0.0, e
    return coef, e


def _custom_eval(metric: MetricField, y, nder):
    """Custom polynomial metric (nder=0), its gradient (1) or Hessian (2)."""
    y = np.asarray(y, dtype=float)
    lead = y.shape[:-1]
    shape = lead + (3, 3) + (3,) * nder
    out = np.zeros(shape)
    if nder == 0:
        out[..., [0, 1, 2], [0, 1, 2]] = 1.0
    # Euclidean defaults are replaced by listed diagonal components
    listed = {(a, b) for a, b, _, _ in metric.coeffs}
    for a, b in listed:
        if a == b and nder == 0:
            out[..., a, a] = 0.0
    for a, b, value, exps in metric.coeffs:
        for axes in itertools.product(range(3), repeat=nder):
            coef, e = _mono_deriv(exps, axes)
            if coef == 0:
                continue
            term = value * coef * y[..., 0] ** e[0] * y[..., 1] ** e[1] * y[..., 2] ** e[2]
            idx = (Ellipsis, a, b) + tuple(axes)
            out[idx] += term
            if a != b:
                idx = (Ellipsis, b, a) + tuple(axes)
                out[idx] += term
    return out


def metric_at(metric: MetricField, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    _check_region(y)
    eye = np.eye(3)
    if metric.kind == "euclidean":
        return np.broadcast_to(eye, y.shape[:-1] + (3, 3)).copy()
    if metric.kind == "constant_curvature":
        phi = 1.0 + metric.kappa * np.sum(y * y, axis=-1) / 4.0
        if np.any(phi <= 0):
            raise MetricError("conformal factor vanishes; point outside the model")
        return eye * (phi ** -2)[..., None, None]
    return _custom_eval(metric, y, 0)


def metric_derivatives_at(metric: MetricField, y):
    """First and second partial derivatives of the metric components."""
    y = np.asarray(y, dtype=float)
    _check_region(y)
    lead = y.shape[:-1]
    if metric.kind == "euclidean":
        return np.zeros(lead + (3, 3, 3)), np.zeros(lead + (3, 3, 3, 3))
    if metric.kind == "constant_curvature":
        k = metric.kappa
        phi = 1.0 + k * np.sum(y * y, axis=-1) / 4.0
        dphi = 0.5 * k * y
        eye = np.eye(3)
        # d_g (phi^-2) = -2 phi^-3 phi_g ; d_g d_d (phi^-2) = 6 phi^-4 phi_g phi_d - 2 phi^-3 phi_gd
        g1 = -2 * phi[..., None] ** -3 * dphi
        g2 = (6 * phi[..., None, None] ** -4 * dphi[..., :, None] * dphi[..., None, :]
              - 2 * phi[..., None, None] ** -3 * (0.5 * k) * eye)
        d1 = eye[:, :, None] * g1[..., None, None, :]
        d2 = eye[:, :, None, None] * g2[..., None, None, :, :]
        return d1, d2
    return _custom_eval(metric, y, 1), _custom_eval(metric, y, 2)


def christoffel_at(metric: MetricField, y) -> np.ndarray:
    """Levi-Civita symbols Gamma^a_bg."""
    y = np.asarray(y, dtype=float)
    lead = y.shape[:-1]
    if metric.kind == "euclidean":
        _check_region(y)
        return np.zeros(lead + (3, 3, 3))
    g = metric_at(metric, y)
    d1, _ = metric_derivatives_at(metric, y)
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError as exc:
        raise MetricError("singular metric matrix") from exc
    # lowered symbols [m, b, g] = (d_b a_mg + d_g a_mb - d_m a_bg) / 2
    low = 0.5 * (np.einsum("...mgb->...mbg", d1) + d1 - np.einsum("...bgm->...mbg", d1))
    return np.einsum("...am,...mbg->...abg", ginv, low)


def transport_segment(metric: MetricField, start, step, v0, substeps=32):
    """Parallel transport along straight segments ``start + tau * step``, tau in [0, 1].

    Vectorized over leading axes: ``start``, ``step`` and ``v0`` have shape (..., 3).
    Classical fourth-order Runge-Kutta with ``substeps`` fixed steps.
    """
    start = np.asarray(start, dtype=float)
    step = np.asarray(step, dtype=float)
    v = np.array(v0, dtype=float, copy=True)
    if metric.is_flat:
        _check_region(start + step)
        return v
    h = 1.0 / substeps

    def rhs(tau, v):
        gam = christoffel_at(metric, start + tau * step)
        return -np.einsum("...abg,...b,...g->...a", gam, step, v)

    for k in range(substeps):
        tau = k * h
        k1 = rhs(tau, v)
        k2 = rhs(tau + h / 2, v + h / 2 * k1)
        k3 = rhs(tau + h / 2, v + h / 2 * k2)
        k4 = rhs(tau + h, v + h * k3)
        v = v + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return v


def parallel_transport(metric: MetricField, path, v0, substeps=32) -> np.ndarray:
    """Transport ``v0`` along the polyline ``path`` (sequence of ambient points)."""
    path = np.asarray(path, dtype=float)
    if path.ndim != 2 or path.shape[1] != 3 or len(path) < 1:
        raise ValueError("path must be an (m, 3) array of ambient points")
    _check_region(path)
    v = np.asarray(v0, dtype=float)
    for a, b in zip(path[:-1], path[1:]):
        v = transport_segment(metric, a, b - a, v, substeps)
    return v


def ambient_norm2(metric: MetricField, y, v) -> np.ndarray:
    return np.einsum("...ab,...a,...b->...", metric_at(metric, y), v, v)


def verify_bounds(metric: MetricField, n=17) -> dict:
    """Sample the working ball on an n^3 lattice and check symmetry, definiteness and M0."""
    pts = _lattice(n)
    g = metric_at(metric, pts)
    d1, d2 = metric_derivatives_at(metric, pts)
    report = {
        "symmetric": bool(np.allclose(g, np.swapaxes(g, -1, -2), atol=0, rtol=0)),
        "min_eigenvalue": float(np.linalg.eigvalsh(g)[:, 0].min()),
        "max_metric": float(np.abs(g).max()),
        "max_first_derivative": float(np.abs(d1).max()),
        "max_second_derivative": float(np.abs(d2).max()),
        "bound": metric.bound,
    }
    report["passed"] = bool(
        report["symmetric"]
        and report["min_eigenvalue"] > 0
        and max(report["max_metric"], report["max_first_derivative"],
                report["max_second_derivative"]) <= metric.bound
    )
    return report
