import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

OMEGA = 2 * np.pi * 10e6


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def omega():
    return OMEGA


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance verdict."""
    def record(number, ok, detail):
        _ACCEPTANCE[number] = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
