import pytest

_LINES: list[str] = []


@pytest.fixture
def record():
    """record(criterion, passed, detail): log one acceptance line, then assert it."""

    def _record(criterion: str, passed: bool, detail: str = ""):
        line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _LINES.append(line)
        print(line)
        assert passed, line

    return _record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
