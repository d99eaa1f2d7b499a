import sys

import numpy as np
import pytest
from hypothesis import settings

from linbgk.collision import build_operator, default_velocity_grid
from linbgk.phase_grid import MaxwellianParams, PhaseGrid, build_spatial_grid

settings.register_profile("repo", deadline=None, max_examples=60)
settings.load_profile("repo")


@pytest.fixture
def unit_params():
    return MaxwellianParams()


@pytest.fixture
def small_star():
    """Small original-frame setup: 16 x 33 grid around (1, 0.5, 1)."""
    params = MaxwellianParams(1.0, 0.5, 1.0)
    vg = default_velocity_grid(params, "star", 33)
    op = build_operator(params, vg, "star", extra_modes=2)
    grid = PhaseGrid(build_spatial_grid(16, 2 * np.pi), vg)
    return params, grid, op


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
