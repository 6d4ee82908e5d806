import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from geofol.constructions import (build_rotation_hypersurface, build_ruled_example,
                                  build_surface_like, circle_profile, clifford_torus,
                                  graph_geodesic_surface,
                                  helicoidal_surface, quartic_graph, smooth_ramp)
from geofol.geometry import ImmersionField
from geofol.numjet import SmoothMap

BACKENDS = ["dual", "fd"]


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def sphere_chart():
    return ImmersionField(SmoothMap(
        lambda x: np.array([x[0], x[1], (1.0 - x[0] ** 2 - x[1] ** 2) ** 0.5]),
        2, 3, [-0.5, -0.5], [0.5, 0.5], name="sphere"))


def cylinder_chart():
    return ImmersionField(SmoothMap(
        lambda x: np.array([np.cos(x[0]), np.sin(x[0]), x[1]]),
        2, 3, [-1.0, -1.0], [1.0, 1.0], name="cylinder"))


def plane_chart(n=2):
    return ImmersionField(SmoothMap(
        lambda x: np.concatenate([x, [0.0 * x[0]]]), n, n + 1,
        [-1.0] * n, [1.0] * n, name="plane"))


def generic_graph_chart():
    return ImmersionField(SmoothMap(
        lambda x: np.array([x[0], x[1], x[2],
                            x[0] ** 2 + 0.5 * x[0] * x[1] - 0.3 * x[2] ** 3 + np.sin(x[1] * x[2])]),
        3, 4, [-0.5] * 3, [0.5] * 3, name="generic graph"))


@pytest.fixture(scope="session")
def torus():
    return build_rotation_hypersurface(circle_profile(0.5), 2.0)


@pytest.fixture(scope="session")
def ruled():
    return build_ruled_example([1.0, smooth_ramp, smooth_ramp], 3, (0.2, 1.0), (-0.3, 0.3))


@pytest.fixture(scope="session")
def helicoidal_like():
    g, D0 = helicoidal_surface()
    return build_surface_like(g, "cylindrical", 3, D0)


@pytest.fixture(scope="session")
def clifford_cone():
    g, D0 = clifford_torus()
    return build_surface_like(g, "conical", 3, D0)


@pytest.fixture(scope="session")
def graph_like():
    g, D0 = graph_geodesic_surface(quartic_graph)
    return build_surface_like(g, "cylindrical", 3, D0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
