import math

import numpy as np
import pytest

from esdlab import DiffusionSchedule, GaussianTarget, LinearGaussianGenerator

# alpha = sigma = 1/sqrt(2) under the default schedule
T_HALF = 0.5 * math.log(2.0)


@pytest.fixture
def schedule():
    return DiffusionSchedule()


@pytest.fixture
def lab_target():
    return GaussianTarget([1.0, -1.0], np.diag([1.0, 0.25]))


@pytest.fixture
def lab_generator():
    return LinearGaussianGenerator([0.3, -0.2], [[0.8, 0.1], [-0.2, 0.5]])


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
