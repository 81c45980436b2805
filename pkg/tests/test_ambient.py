import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from riemann_deform.ambient import (MetricError, MetricField, ambient_norm2, christoffel_at,
                                    metric_at, metric_derivatives_at, parallel_transport,
                                    transport_segment, verify_bounds)

point = st.lists(st.floats(-3, 3), min_size=3, max_size=3).map(np.array)


def fd_christoffel(metric, y, h=1e-5):
    """Levi-Civita symbols from central differences of metric_at only."""
    y = np.asarray(y, float)
    dg = np.empty((3, 3, 3))
    for c in range(3):
        e = np.zeros(3)
        e[c] = h
        dg[:, :, c] = (metric_at(metric, y + e) - metric_at(metric, y - e)) / (2 * h)
    ginv = np.linalg.inv(metric_at(metric, y))
    low = 0.5 * (np.einsum("dbg->dbg", dg) + np.einsum("dgb->dbg", dg) - np.einsum("bgd->dbg", dg))
    return np.einsum("ad,dbg->abg", ginv, low)


def test_euclidean_metric_is_identity():
    assert np.array_equal(metric_at(MetricField.euclidean(), [1.0, 2.0, 3.0]), np.eye(3))


def test_constant_curvature_values():
    m = MetricField.constant_curvature(1.0)
    assert np.allclose(metric_at(m, [0.0, 0, 0]), np.eye(3), atol=1e-15)
    assert np.allclose(metric_at(m, [2.0, 0, 0]), 0.25 * np.eye(3), atol=1e-15)


def test_metric_derivatives():
    d1, d2 = metric_derivatives_at(MetricField.euclidean(), [0.3, -1.0, 2.0])
    assert not d1.any() and not d2.any()
    d1, _ = metric_derivatives_at(MetricField.constant_curvature(1.0), [0.0, 0, 0])
    assert np.abs(d1).max() < 1e-15
    # 1 + y1*y2 is indefinite far out in the working ball, so skip the scan
    m = MetricField.custom({"11": [[1.0, 0, 0, 0], [1.0, 1, 1, 0]]}, check=False)
    d1, _ = metric_derivatives_at(m, [0.0, 1.0, 0.0])
    assert d1[0, 0, 0] == pytest.approx(1.0)


def test_christoffel_zero_cases():
    assert not christoffel_at(MetricField.euclidean(), [1.0, 2, 3]).any()
    assert np.abs(christoffel_at(MetricField.constant_curvature(1.0), [0.0, 0, 0])).max() < 1e-15


@pytest.mark.parametrize("metric", [
    MetricField.constant_curvature(1.0),
    MetricField.constant_curvature(-0.04),
    MetricField.custom({"11": [[1.0, 0, 0, 0], [0.01, 1, 1, 0]], "23": [[0.005, 0, 0, 2]]}),
])
def test_christoffel_matches_finite_difference(metric):
    for y in ([2.0, 0, 0], [0.3, -0.7, 1.1]):
        assert np.abs(christoffel_at(metric, y) - fd_christoffel(metric, y)).max() < 1e-8


@settings(max_examples=30, deadline=None)
@given(point, st.floats(-0.05, 2.0))
def test_christoffel_symmetric_and_metric_spd(y, kappa):
    m = MetricField.constant_curvature(kappa)
    gam = christoffel_at(m, y)
    assert np.allclose(gam, np.swapaxes(gam, 1, 2), atol=1e-14)
    assert np.linalg.eigvalsh(metric_at(m, y)).min() > 0


def test_flat_transport_identity():
    v = parallel_transport(MetricField.euclidean(), [[0, 0, 0], [1, 2, 3], [-1, 0, 4]], [1.0, 0, 0])
    assert np.array_equal(v, [1.0, 0, 0])


def test_zero_length_path():
    m = MetricField.constant_curvature(1.0)
    v0 = np.array([0.2, -1.0, 0.5])
    assert np.allclose(parallel_transport(m, [[1.0, 0.5, 0]], v0), v0)
    assert np.allclose(transport_segment(m, [1.0, 0.5, 0], [0.0, 0, 0], v0), v0)


def test_transport_matches_adaptive_ode():
    m = MetricField.constant_curvature(1.0)
    start, step, v0 = np.zeros(3), np.array([1.0, 0, 0]), np.array([0.0, 1.0, 0])

    def rhs(tau, v):
        return -np.einsum("abg,b,g->a", christoffel_at(m, start + tau * step), step, v)

    ref = solve_ivp(rhs, (0, 1), v0, method="DOP853", rtol=1e-13, atol=1e-14).y[:, -1]
    assert np.abs(transport_segment(m, start, step, v0) - ref).max() < 1e-6


@settings(max_examples=25, deadline=None)
@given(point, point, point, st.floats(0.05, 1.0))
def test_transport_preserves_norm(p0, direction, v0, length):
    if np.linalg.norm(direction) < 1e-3 or np.linalg.norm(v0) < 1e-3:
        return
    m = MetricField.constant_curvature(1.0)
    step = direction / np.linalg.norm(direction) * length
    v = transport_segment(m, p0, step, v0)
    n0 = ambient_norm2(m, p0, v0)
    assert abs(ambient_norm2(m, p0 + step, v) - n0) <= 1e-8 * n0


def test_non_spd_custom_metric_rejected():
    with pytest.raises(MetricError, match="not positive definite at y="):
        MetricField.custom({"11": [[-1.0, 0, 0, 0]]})


def test_bad_metric_specs():
    with pytest.raises(MetricError):
        MetricField.custom({"11": [[1.0, 5, 0, 0]]})
    with pytest.raises(MetricError):
        MetricField("hyperbolic")
    with pytest.raises(MetricError):
        MetricField.constant_curvature(-1.0)
    with pytest.raises(MetricError):
        metric_at(MetricField.euclidean(), [100.0, 0, 0])


def test_config_roundtrip_and_bounds():
    m = MetricField.custom({"11": [[1.0, 0, 0, 0], [0.01, 1, 1, 0]]}, bound=50.0)
    assert MetricField.from_config(m.to_config()) == m
    rep = verify_bounds(MetricField.constant_curvature(0.5), n=7)
    assert rep["passed"] and rep["symmetric"]
