import numpy as np
import pytest

from gdno import spectral as sp


@pytest.fixture
def grid32():
    return sp.HGrid(32)


@pytest.fixture
def grid16():
    return sp.HGrid(16)


@pytest.fixture
def vgrid24():
    return sp.VGrid(24, 1.0)


def wavy(grid, a=0.05):
    """Generic smooth surface used across tests."""
    return a * (np.cos(grid.X) + 0.5 * np.sin(2 * grid.Y))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(mod.REPORT):
        terminalreporter.write_line(line)
