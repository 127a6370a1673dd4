import numpy as np
import pytest

from sqfam.features import PolynomialFeatures
from sqfam.measure import BoxLebesgue
from sqfam.model import SquaredFamily

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def linear_family():
    """``psi = (x, 1)`` on ``[0, 1]``; its kernel is ``[[1/3, 1/2], [1/2, 1]]``."""
    return SquaredFamily.build(PolynomialFeatures(1), BoxLebesgue([0.0], [1.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
