import numpy as np
import pytest

from plateau_dg.cli import ProblemConfig
from plateau_dg.mesh import fan_mesh, generate_disc_mesh
from plateau_dg.spaces import build_dofmaps


def make_problem(tensor="identity", **kw):
    return ProblemConfig(tensor=tensor, **kw)


@pytest.fixture(scope="session")
def fan():
    mesh = fan_mesh(4)
    return mesh, build_dofmaps(mesh)


@pytest.fixture(scope="session")
def small():
    # 16 boundary edges, 32 cells
    mesh = generate_disc_mesh(16, 0.5)
    return mesh, build_dofmaps(mesh)


@pytest.fixture(scope="session")
def mesh64():
    mesh = generate_disc_mesh(64, 0.5)
    return mesh, build_dofmaps(mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
