"""Collect acceptance-criterion outcomes and print one line per criterion."""

import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    rep = outcome.get_result()
    num, title = mark.args
    entry = _RESULTS.setdefault(num, {"title": title, "ok": True, "failed": []})
    if rep.failed:
        entry["ok"] = False
        entry["failed"].append(item.name)
    elif rep.skipped and rep.when == "setup":
        entry["ok"] = False
        entry["failed"].append(item.name + " (skipped)")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_RESULTS):
        e = _RESULTS[num]
        line = f"{'PASS' if e['ok'] else 'FAIL'}  {num:>2}. {e['title']}"
        if e["failed"]:
            line += "  [" + ", ".join(e["failed"]) + "]"
        tr.write_line(line)
