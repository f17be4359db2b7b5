import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "fractex", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("fractex")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def mirror_index(i, n):
    """Half-sample symmetric extension of index ``i`` into ``0..n-1``."""
    period = 2 * n
    i = i % period
    return i if i < n else period - 1 - i


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed and not rep.skipped):
        return
    number, title = mark.args
    entry = _CRITERIA.setdefault(number, {"title": title, "outcomes": []})
    entry["outcomes"].append("passed" if rep.passed and rep.when == "call"
                             else "skipped" if rep.skipped else "failed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        outs = entry["outcomes"]
        status = ("FAIL" if "failed" in outs else
                  "SKIP" if all(o == "skipped" for o in outs) else "PASS")
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {entry['title']}")
