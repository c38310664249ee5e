import numpy as np
import pytest

from gpdoe.design import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


def random_lhs_points(n, d, rng):
    return (np.column_stack([rng.permutation(n) for _ in range(d)]) + rng.random((n, d))) / n


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
