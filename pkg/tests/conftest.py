import numpy as np
import pytest

from cvmc import Domain, SamplePoints


def points(domain, values):
    arr = np.asarray(values, dtype=float).reshape(-1, domain.dim)
    return SamplePoints(domain, arr, seed=-1)


@pytest.fixture
def unit():
    return Domain.unit_interval()


@pytest.fixture
def sym():
    return Domain.symmetric_interval()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
