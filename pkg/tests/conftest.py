"""Shared fixtures and the acceptance-criterion summary plugin.

Tests marked ``@pytest.mark.criterion(n, "title")`` are aggregated at
the end of the run into one PASS/FAIL line per criterion.
"""

from __future__ import annotations

from pathlib import Path

import pytest

from maptally import load_legend

DATA = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def siam19():
    return load_legend(DATA / "legends" / "siam19.csv")


@pytest.fixture(scope="session")
def nlcd16():
    return load_legend(DATA / "legends" / "nlcd16.csv")


@pytest.fixture(scope="session")
def lccsdp4():
    return load_legend(DATA / "legends" / "lccsdp4.csv")


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(number, title): acceptance criterion this test backs")


_RESULTS: dict[int, dict] = {}


def _criterion_of(item):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return None
    number = int(marker.args[0])
    title = marker.args[1] if len(marker.args) > 1 else ""
    return number, title


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    tagged = _criterion_of(item)
    if tagged is None:
        return
    number, title = tagged
    entry = _RESULTS.setdefault(number, {"title": title, "failed": 0,
                                         "passed": 0, "xfailed": 0})
    if report.when == "call" or (report.when == "setup" and report.failed):
        if hasattr(report, "wasxfail"):
            # expected failures do not sink a criterion
            entry["xfailed"] += 1
        elif report.failed:
            entry["failed"] += 1
        elif report.passed and report.when == "call":
            entry["passed"] += 1


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "FAIL" if entry["failed"] else "PASS"
        extra = ""
        if entry["xfailed"]:
            extra = f" ({entry['xfailed']} expected-failure case(s) noted)"
        terminalreporter.write_line(
            f"ACCEPTANCE CRITERION {number}: {status} - "
            f"{entry['title']}{extra}")
