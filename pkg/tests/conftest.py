import pytest

_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    if call.when == "setup" and call.excinfo is not None:
        _CRITERIA[n] = (title, "FAIL", f"setup error: {call.excinfo.value!r}")
    elif call.when == "call":
        detail = dict(item.user_properties).get("detail", "")
        if call.excinfo is not None and not detail:
            detail = call.excinfo.exconly().splitlines()[0]
        _CRITERIA[n] = (title, "FAIL" if call.excinfo is not None else "PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, verdict, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {verdict}  {title}: {detail}")


@pytest.fixture
def detail(record_property):
    """Attach a one-line measurement to the acceptance report."""
    def put(text):
        record_property("detail", text)
        print(text)
    return put
