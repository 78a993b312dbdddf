
import numpy as np
import pytest

from qubitid.bloch import Parameters
from qubitid.experiments import REFERENCE_BOX, REFERENCE_THETA, REFERENCE_TIMES

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def theta_star():
    return REFERENCE_THETA


@pytest.fixture
def box():
    return REFERENCE_BOX


@pytest.fixture
def ref_times():
    return REFERENCE_TIMES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_parameters(rng, size, box=REFERENCE_BOX):
    return [Parameters.from_array(row) for row in box.sample(rng, size)]
