import numpy as np
import pytest

from hypparab.geometry import build_grid


@pytest.fixture
def grid1d():
    return build_grid(1, [1.0], [32])


@pytest.fixture
def grid2d():
    return build_grid(2, [1.0, 1.0], [16, 16])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def record_criterion():
    """Store the one-line verdict of an acceptance criterion for the summary."""
    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = (f"criterion {number} {title}: "
                                    f"{'PASS' if passed else 'FAIL'} ({detail})")
        print(ACCEPTANCE_LINES[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
