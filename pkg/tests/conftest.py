import pytest

_RESULTS = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, passed, detail)``; ``passed=None`` marks a skip."""

    def record(number, passed, detail):
        line = f"CRITERION {number}: {'SKIP' if passed is None else 'PASS' if passed else 'FAIL'} | {detail}"
        _RESULTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in _RESULTS:
            terminalreporter.write_line(line)
