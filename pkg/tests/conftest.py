import pytest

_LINES = []


@pytest.fixture
def report(request):
    """Record one acceptance line: ``report(label, passed, detail)``."""
    terminal = request.config.pluginmanager.get_plugin("terminalreporter")

    def _report(label, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'} {label}: {detail}"
        _LINES.append(line)
        if terminal is not None:
            terminal.write_line("")
            terminal.write_line(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
