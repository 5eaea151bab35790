"""Shared pytest configuration: the acceptance report printed at the end of a run.

Tests marked ``@pytest.mark.criterion(k, "title")`` are collected into a
table with one PASS / FAIL / SKIP line per criterion.
"""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


def _criterion(item):
    mark = item.get_closest_marker("criterion")
    return None if mark is None else (mark.args[0], mark.args[1])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    crit = _criterion(item)
    if crit is None:
        return
    number, title = crit
    status, detail = _RESULTS.get(number, ("PASS", title))
    if report.skipped:
        new = "SKIP"
    elif report.failed:
        new = "FAIL"
    elif report.when == "call":
        new = "PASS"
    else:
        return
    # any failure fails the criterion; a pass outranks a skipped alternative tier
    rank = {"SKIP": 0, "PASS": 1, "FAIL": 2}
    if number not in _RESULTS or rank[new] > rank[status]:
        reason = ""
        if new == "SKIP" and isinstance(report.longrepr, tuple):
            reason = report.longrepr[2].removeprefix("Skipped: ")
        _RESULTS[number] = (new, title + (f" ({reason})" if reason else ""))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        status, title = _RESULTS[number]
        tr.write_line(f"criterion {number}: {status}  {title}")
