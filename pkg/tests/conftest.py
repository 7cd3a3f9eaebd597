import numpy as np
import pytest

_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when not in ("setup", "call"):
        return
    if call.when == "setup" and call.excinfo is None:
        return
    if call.excinfo is None:
        outcome = "PASS"
    elif call.excinfo.errisinstance(pytest.skip.Exception):
        outcome = "SKIP"
    else:
        outcome = "FAIL"
    _CRITERIA.setdefault(marker.args[0], []).append((outcome, item.name))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        outcomes = {o for o, _ in results}
        overall = "FAIL" if "FAIL" in outcomes else "PASS" if "PASS" in outcomes else "SKIP"
        detail = ", ".join(name if o == overall else f"{name}: {o}" for o, name in results)
        terminalreporter.write_line(f"criterion {n:>2}: {overall}  ({detail})")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
