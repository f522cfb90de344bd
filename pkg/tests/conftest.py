import pytest

_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""

    def record(number: int, passed: bool, detail: str = "") -> bool:
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _VERDICTS[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
