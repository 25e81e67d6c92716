import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[VERDICTS] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def verdict(request):
    """Record the outcome of the test's ``criterion`` marker, then assert it."""
    mark = request.node.get_closest_marker("criterion")
    store = request.config.stash[VERDICTS]

    def record(ok: bool, detail: str):
        number, title = mark.args
        store[number] = (bool(ok), title, detail)
        assert ok, f"{title}: {detail}"

    return record


def pytest_runtest_setup(item):
    # marked failed up front so a crash in a fixture still shows in the summary
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        number, title = mark.args
        item.config.stash[VERDICTS].setdefault(number, (False, title, "did not complete"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash[VERDICTS]
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        ok, title, detail = store[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {n:2d}. {title}: {detail}")
