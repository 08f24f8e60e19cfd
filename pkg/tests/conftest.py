import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", derandomize=True, deadline=None, print_blob=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

_ACCEPTANCE: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.fixture
def acceptance(request):
    """Detail lines collected by an acceptance test, shown in the summary."""
    marker = request.node.get_closest_marker("criterion")
    entry = _ACCEPTANCE.setdefault(request.node.nodeid, {
        "number": marker.args[0], "title": marker.args[1], "details": [], "outcome": "not run"})
    return entry["details"]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    entry = _ACCEPTANCE.get(item.nodeid)
    if entry is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        entry["outcome"] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for entry in sorted(_ACCEPTANCE.values(), key=lambda e: e["number"]):
        details = "; ".join(entry["details"])
        terminalreporter.write_line(
            f"criterion {entry['number']}: {entry['outcome']:4s} {entry['title']}" + (f" ({details})" if details else ""))
