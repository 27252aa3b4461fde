import numpy as np
import pytest

from fracenvelope.core import Domain, DirectionSet, clipped_quadratic, make_grid

# lines collected by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def disk():
    return Domain.disk(1.0)


@pytest.fixture(scope="session")
def quad_datum():
    return clipped_quadratic()


@pytest.fixture(scope="session")
def coarse(disk):
    h = 1.0 / 16
    return make_grid(disk, h), DirectionSet.build(3, h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
