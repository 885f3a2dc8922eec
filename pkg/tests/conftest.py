"""Collects the outcome of every acceptance criterion and prints one line per
criterion at the end of the session."""

import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or rep.outcome != "passed":
        number, title = marker.args[:2]
        props = dict(item.user_properties)
        # a failed setup or teardown overrides a passing call
        if number in _CRITERIA and _CRITERIA[number][1] != "passed":
            return
        _CRITERIA[number] = (title, rep.outcome, props.get("seconds"),
                             marker.kwargs.get("budget"), props.get("detail", ""))


def format_criterion(number, title, outcome, seconds, budget, detail):
    word = "PASS" if outcome == "passed" else "FAIL"
    took = "-" if seconds is None else f"{seconds:.2f} s"
    return f"{word} criterion {number:2d}  {title:34s} {took:>9s} (budget {budget:g} s)  {detail}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        terminalreporter.write_line(format_criterion(number, *_CRITERIA[number]))
    passed = sum(1 for v in _CRITERIA.values() if v[1] == "passed")
    terminalreporter.write_line(f"{passed}/{len(_CRITERIA)} criteria passed")
