import numpy as np
import pytest

from interhmr import body_model as bm


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def toy_model():
    return bm.make_toy_model(7, 100, 24, 10)


@pytest.fixture(scope="session")
def toy_model_pc():
    return bm.make_toy_model(11, 72, 24, 10, pose_correctives=True)


# one status line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
