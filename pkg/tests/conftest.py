import itertools

import numpy as np
import pytest
from hypothesis import settings

from dyadic_shift.metric_core import PointCloud, line_grid, torus_grid

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def line16():
    return line_grid(16)


@pytest.fixture
def torus16():
    return torus_grid(4)


def points_on_line(values):
    return PointCloud(coords=np.asarray(values, dtype=float), topology="line")


def min_cover(cloud, x, r):
    """Independent cover-number oracle: smallest set of closed r/2 data balls covering B[x, r]."""
    xs = [float(v) for v in np.ravel(cloud.coords)]
    D = [[abs(a - b) if cloud.topology == "line" else min(abs(a - b), 1 - abs(a - b))
          for b in xs] for a in xs]
    target = {i for i in range(cloud.n) if D[x][i] <= r}
    for size in range(1, len(target) + 1):
        for combo in itertools.combinations(range(cloud.n), size):
            if all(any(D[c][t] <= r / 2 for c in combo) for t in target):
                return size
    return len(target)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; it is printed now and again in the terminal summary."""
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
