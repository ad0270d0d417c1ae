import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def record_acceptance():
    """Store the one-line verdict of an acceptance criterion for the summary."""
    def record(number: int, passed: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
