import pytest

_CRITERIA = []


@pytest.fixture(scope="session")
def report():
    """Record one PASS/FAIL line per acceptance criterion; returns the verdict."""

    def _report(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        _CRITERIA.append((number, line))
        print("\n" + line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(_CRITERIA, key=lambda item: item[0]):
        terminalreporter.write_line(line)
