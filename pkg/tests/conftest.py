import numpy as np
import pytest

from holder_descent import problems

ACCEPTANCE_LINES = []


@pytest.fixture
def scalar():
    return problems.make_scalar_example(1.0)


@pytest.fixture(scope="session")
def composite5():
    return problems.make_composite_problem(5, 0.5, 0)


@pytest.fixture(scope="session")
def composite10():
    return problems.make_composite_problem(10, 0.5, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
