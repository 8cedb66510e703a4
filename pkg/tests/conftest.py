import pytest

from omegalab import continuum as ct
from omegalab import nlie

# benchmark of the interacting continuum: MR = 0.1, p = 0.3, alpha = 0.4
P, MR, ALPHA = 0.3, 0.1, 0.4
KAPPA, KAPPA_PRIME = 0.0, 0.05

_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def interacting_study():
    """Identity suites on grid levels 0 and 1 for both rays."""
    return ct.refinement_study(P, MR, KAPPA, KAPPA_PRIME, ALPHA, levels=(0, 1))


@pytest.fixture(scope="session")
def interacting_system(interacting_study):
    return interacting_study.systems[0]


@pytest.fixture(scope="session")
def free_system():
    data = ct.ContinuumData(P, MR, KAPPA, KAPPA, nlie.default_grid(0))
    return ct.ShiftSystem(data, ALPHA)


@pytest.fixture(scope="session")
def ddv_pair():
    grid = nlie.default_grid(0)
    return nlie.solve_ddv(P, MR, KAPPA, grid), nlie.solve_ddv(P, MR, KAPPA_PRIME, grid)
