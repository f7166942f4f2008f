import numpy as np
import pytest

from jetmpc.jets import JetParams
from jetmpc.kinematics import default_robot


@pytest.fixture(scope="session")
def robot():
    return default_robot()


@pytest.fixture(scope="session")
def jets():
    return JetParams.linear()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
