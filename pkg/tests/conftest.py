import numpy as np
import pytest

from pnlab.layer import compute_layer, exact_layer

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def exact():
    return exact_layer()


@pytest.fixture(scope="session")
def relaxed():
    """Relaxed s = 1/2 layer on the default grid (about 12 s)."""
    return compute_layer(0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
