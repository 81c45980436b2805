import numpy as np
import pytest

from riemann_deform.ambient import MetricField
from riemann_deform.grid import PolarGrid
from riemann_deform.surface import Chart, build_immersion, fundamental_forms


@pytest.fixture(scope="session")
def euclid():
    return MetricField.euclidean()


@pytest.fixture(scope="session")
def grid16():
    return PolarGrid(16, 64)


@pytest.fixture(scope="session")
def sphere16(grid16):
    return build_immersion(Chart.make("stereographic_sphere", R=1.0), grid16)


@pytest.fixture(scope="session")
def cap16(grid16):
    return build_immersion(Chart.make("spherical_cap", R=1.0, rho=np.pi / 4), grid16)


@pytest.fixture(scope="session")
def sphere_forms16(sphere16, euclid):
    return fundamental_forms(sphere16, euclid)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
