import sys
from collections import defaultdict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# nodeid -> (criterion number, title, passed)
_criteria: dict[str, tuple[int, str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    ok = rep.passed and not hasattr(rep, "wasxfail")
    if rep.when == "call" or not ok:
        prev = _criteria.get(item.nodeid)
        _criteria[item.nodeid] = (number, title, ok and (prev is None or prev[2]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    grouped = defaultdict(list)
    titles = {}
    for number, title, ok in _criteria.values():
        grouped[number].append(ok)
        titles[number] = title
    terminalreporter.section("acceptance criteria")
    for number in sorted(grouped):
        oks = grouped[number]
        verdict = "PASS" if all(oks) else "FAIL"
        terminalreporter.write_line(
            f"criterion {number:>2}: {verdict}  {titles[number]} ({sum(oks)}/{len(oks)} checks)"
        )
