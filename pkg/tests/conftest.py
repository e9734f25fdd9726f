import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.skipped:
        return
    if rep.when == "call" or rep.failed:
        detail = dict(item.user_properties).get("detail", "")
        if rep.failed and not detail:
            detail = str(rep.longrepr).strip().splitlines()[-1][:200]
        _CRITERIA[mark.args[0]] = (rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
