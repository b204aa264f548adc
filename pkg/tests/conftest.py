import numpy as np
import pytest

from nilmcomplexity.domain import ApplianceSet

TRIO_STATES = [[0, 10], [0, 20], [0, 35]]
TRIO_POWERS = [0, 10, 20, 30, 35, 45, 55, 65]


@pytest.fixture
def trio_set():
    return ApplianceSet.from_watts(TRIO_STATES)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number = dict(report.user_properties).get("criterion")
    if number is not None:
        ok = _CRITERIA.get(number, True) and report.passed
        _CRITERIA[number] = ok


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status = "PASS" if _CRITERIA[number] else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}")
