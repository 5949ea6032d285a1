import numpy as np
import pytest

from hdbvp.grid import make_grid


@pytest.fixture
def g1():
    return make_grid(1, 1, 16, 2 * np.pi, 2.0 ** -6, 2.0 ** 6, 49)


@pytest.fixture
def g12():
    return make_grid(1, 2, 8, 2 * np.pi, 2.0 ** -5, 2.0 ** 5, 21)


@pytest.fixture
def g2():
    return make_grid(2, 1, 8, 2 * np.pi, 2.0 ** -5, 2.0 ** 5, 21)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(RESULTS):
        name, ok, detail = RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {name}")
