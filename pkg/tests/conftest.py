import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fbsheet import Grid2D, HurstPair  # noqa: E402


@pytest.fixture
def grid16():
    return Grid2D.square(1.0, 16)


@pytest.fixture
def h25():
    return HurstPair(0.25, 0.25)


@pytest.fixture
def h10():
    return HurstPair(0.1, 0.1)


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
