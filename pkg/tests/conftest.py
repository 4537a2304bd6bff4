import numpy as np
import pytest

from extremal_qte.propensity import Sample


@pytest.fixture
def rng():
    return np.random.default_rng(20240501)


def make_sample(y, d=None, x=None):
    y = np.asarray(y, dtype=float)
    d = np.ones(y.size, dtype=int) if d is None else d
    x = np.linspace(0, 1, y.size) if x is None else x
    return Sample(y, d, x)


ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    """Store the outcome of an acceptance criterion for the end-of-run summary."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
