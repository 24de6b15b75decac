import time

import pytest

_criteria = {}
_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, budget_s): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria[item.nodeid] = m.args


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    t0 = time.perf_counter()
    yield
    item.user_properties.append(("wall_s", time.perf_counter() - t0))


def pytest_runtest_logreport(report):
    if report.nodeid not in _criteria:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        wall = dict(report.user_properties).get("wall_s", 0.0)
        _outcomes[report.nodeid] = (report.outcome, wall, report.longrepr)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for nodeid, (number, title, budget) in sorted(_criteria.items(), key=lambda kv: kv[1][0]):
        if nodeid not in _outcomes:
            continue
        outcome, wall, longrepr = _outcomes[nodeid]
        word = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        line = f"criterion {number:2d} {word}  {title}  ({wall:.1f} s, budget {budget} s)"
        if outcome == "failed" and longrepr is not None:
            msg = getattr(getattr(longrepr, "reprcrash", None), "message", "")
            line += "  -- " + msg.splitlines()[0] if msg else ""
        tr.write_line(line)
