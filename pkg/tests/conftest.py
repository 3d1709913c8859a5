import numpy as np
import pytest

from degentrace import TestFunction
from degentrace.model import HomogeneousForm, PotentialModel, preset_model


@pytest.fixture(scope="session")
def tf():
    return TestFunction()


@pytest.fixture(scope="session")
def quartic():
    return preset_model("quartic-1d")


@pytest.fixture(scope="session")
def sextic():
    return preset_model("sextic-1d")


@pytest.fixture(scope="session")
def radial():
    return preset_model("radial-quartic-2d")


@pytest.fixture(scope="session")
def harmonic():
    """``V = x^2``; outside the degenerate class but a useful spectral oracle."""
    return PotentialModel(1, germ_terms=(HomogeneousForm(1, 2, {(2,): 1.0}),), name="harmonic")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_lines():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
