import numpy as np
import pytest

from mpirtik.problems import make_problem

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def spectra():
    return make_problem("spectra", mu=1.0, seed=42)


@pytest.fixture(scope="session")
def spectra_a2():
    return 1e-2


@pytest.fixture(scope="session")
def criterion():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
