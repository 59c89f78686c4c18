import pytest

_RESULTS_KEY = pytest.StashKey[dict]()
_NOTES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion checked by the test")
    config.stash[_RESULTS_KEY] = {}


@pytest.fixture
def observed(request):
    """Collects measured values to show next to the criterion in the summary."""
    notes = []
    request.node.stash[_NOTES_KEY] = notes
    return notes.append


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (report.when == "call" or report.failed):
        return
    # several tests may share one criterion: all must pass
    ok, notes = item.config.stash[_RESULTS_KEY].get(mark.args[0], (True, []))
    notes = notes + item.stash.get(_NOTES_KEY, [])
    item.config.stash[_RESULTS_KEY][mark.args[0]] = (ok and not report.failed, notes)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_RESULTS_KEY]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for label, (ok, notes) in results.items():
        line = f"{'PASS' if ok else 'FAIL'}  {label}"
        if notes:
            line += "  [" + "; ".join(notes) + "]"
        terminalreporter.write_line(line)
