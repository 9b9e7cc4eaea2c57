"""Collects outcomes of tests marked ``criterion`` and prints one line each."""

import pytest

_results: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, text = mark.args
    entry = _results.setdefault(number, {"text": text, "status": None, "detail": ""})
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if report.skipped:
            status = "SKIP"
        elif report.passed:
            status = "PASS"
        else:
            status = "FAIL"
        # a criterion passes only if every test tied to it passes
        rank = {"FAIL": 2, "SKIP": 1, "PASS": 0}
        if entry["status"] is None or rank[status] > rank[entry["status"]]:
            entry["status"] = status
            if status != "PASS":
                crash = getattr(report.longrepr, "reprcrash", None)
                if isinstance(report.longrepr, tuple):  # skip: (path, line, reason)
                    text = report.longrepr[2]
                else:
                    text = crash.message if crash is not None else str(report.longrepr)
                entry["detail"] = text.strip().splitlines()[0][:160]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        r = _results[number]
        line = f"criterion {number:>2}: {r['status']:<4}  {r['text']}"
        if r["detail"]:
            line += f"  [{r['detail']}]"
        terminalreporter.write_line(line)
