"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    marker = _criterion_of(report)
    if marker is None:
        return
    number, title = marker
    entry = _outcomes.setdefault(number, {"title": title, "status": "PASS", "details": []})
    if report.when == "call" or report.outcome != "passed":
        if report.skipped:
            if entry["status"] == "PASS":
                entry["status"] = "SKIP"
        elif report.failed:
            entry["status"] = "FAIL"
    for key, value in report.user_properties:
        if key == "detail" and value not in entry["details"]:
            entry["details"].append(value)


_criteria_by_nodeid = {}


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            _criteria_by_nodeid[item.nodeid] = (marker.args[0], marker.args[1])


def _criterion_of(report):
    return _criteria_by_nodeid.get(report.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        entry = _outcomes[number]
        terminalreporter.write_line(f"criterion {number}: {entry['status']}  {entry['title']}")
        for detail in entry["details"]:
            terminalreporter.write_line(f"    {detail}")
