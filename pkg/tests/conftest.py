import numpy as np
import pytest

from forestnav.forest import ForestConfig, generate_forest


@pytest.fixture(scope="session")
def default_forest():
    return generate_forest(ForestConfig())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
