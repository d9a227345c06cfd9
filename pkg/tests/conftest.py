import pytest

_outcomes: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _outcomes.setdefault(n, {"title": title, "passed": True, "details": []})
    if report.failed or (report.when == "call" and report.skipped):
        entry["passed"] = False
    if report.when == "call":
        entry["details"] = [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_outcomes):
        e = _outcomes[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if e['passed'] else 'FAIL'}  {e['title']}")
        for d in e["details"]:
            terminalreporter.write_line(f"    {d}")
