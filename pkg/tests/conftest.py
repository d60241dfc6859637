import pytest

from mcflab.flow import FlowParams, evolve
from mcflab.mesh import geodesic_sphere, icosphere
from mcflab.space_forms import AmbientSpaceForm


@pytest.fixture(scope="session")
def euclid():
    return AmbientSpaceForm.euclidean()


@pytest.fixture(scope="session")
def sphere3():
    return AmbientSpaceForm.sphere(1.0)


@pytest.fixture(scope="session")
def hyper3():
    return AmbientSpaceForm.hyperbolic(-1.0)


@pytest.fixture(scope="session")
def small_sphere_run(euclid):
    """Coarse unit-sphere run to t = 0.2 keeping a mesh every 5 steps."""
    return evolve(icosphere(3), euclid, FlowParams(t_max=0.2, mesh_every=5))


@pytest.fixture(scope="session")
def coarse_blowup_run(euclid):
    """Coarse unit-sphere run until max |A|^2 exceeds 1e4."""
    return evolve(icosphere(3), euclid, FlowParams(A2_ceiling=1e4))


@pytest.fixture(scope="session")
def curved_run(sphere3):
    return evolve(geodesic_sphere(sphere3, 1.0, 3), sphere3, FlowParams(t_max=0.2, mesh_every=5))


ACCEPTANCE_LINES = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
