import numpy as np
import pytest

from triplegraph.numerics import SeededRng

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def np_rng():
    return np.random.default_rng(12345)


@pytest.fixture
def rng():
    return SeededRng(7)


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the summary prints them in criterion order."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, passed, detail):
        store[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(store[number])
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for number in sorted(store):
            terminalreporter.write_line(store[number])
