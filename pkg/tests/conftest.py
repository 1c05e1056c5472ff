import numpy as np
import pytest

from enkflab.model import LinearGaussianModel

_ACCEPTANCE_LINES = []


@pytest.fixture
def default_model():
    return LinearGaussianModel(A=0.0, H=1.0, sigma_B=1.0, m0=0.0, Sigma0=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def criterion_log():
    """Record one acceptance line; all lines are echoed in the terminal summary."""
    def log(number, passed, text):
        _ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}")
    return log


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
