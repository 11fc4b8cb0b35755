import pytest

_LINES = []


@pytest.fixture(scope="session")
def report():
    """``report(k, ok, detail)`` prints and records one line per acceptance criterion."""

    def _report(k, ok, detail):
        line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _LINES.append((k, line))
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
