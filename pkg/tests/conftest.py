import numpy as np
import pytest

from tcdiff.sde import SimConfig


@pytest.fixture
def cfg():
    return SimConfig(seed=12345, t_max=5.0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[1].split(".")[0])):
            terminalreporter.write_line(line)
