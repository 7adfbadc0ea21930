import numpy as np
import pytest

from hardylab.mesh import Mesh, build_domain, generate_mesh
from hardylab.operators import assemble

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def uniform_interval(n: int, L: float = 1.0) -> Mesh:
    X = np.linspace(0.0, L, n + 1)[:, None]
    cells = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(build_domain("interval", L=L), X, cells)


@pytest.fixture(scope="session")
def interval_ops():
    return assemble(uniform_interval(100))


@pytest.fixture(scope="session")
def disk_mesh():
    return generate_mesh(build_domain("tangent_disk", radius=1.0), 0.1)


@pytest.fixture(scope="session")
def disk_ops(disk_mesh):
    return assemble(disk_mesh)


@pytest.fixture(scope="session")
def half_disk_ops():
    return assemble(generate_mesh(build_domain("half_disk", radius=1.0), 0.1))
