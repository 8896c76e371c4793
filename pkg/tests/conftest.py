import numpy as np
import pytest

from dbpm.verify import logistic_testbed, quadratic_testbed


@pytest.fixture(scope="session")
def logistic_bed():
    return logistic_testbed()


@pytest.fixture(scope="session")
def quad_bed():
    return quadratic_testbed()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
