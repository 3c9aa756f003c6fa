from __future__ import annotations

import numpy as np
import pytest

from kfsi.boundary import BoundaryGrid, circle
from kfsi.mesh import build_disk_mesh
from kfsi.shell import ShellReference
from kfsi.solver import CoupledSystem


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid64():
    return BoundaryGrid(64)


@pytest.fixture(scope="session")
def unit_ref(grid64):
    return ShellReference.from_position(circle(grid64))


@pytest.fixture(scope="session")
def mesh8():
    return build_disk_mesh(8, BoundaryGrid(64))


@pytest.fixture(scope="session")
def system8(mesh8):
    return CoupledSystem(mesh8)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = next((m for n, m in sys.modules.items() if n.endswith("test_acceptance")), None)
    rows = getattr(module, "RESULTS", [])
    if rows:
        terminalreporter.section("acceptance criteria")
        for row in rows:
            terminalreporter.write_line(row)
