import pytest

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record a one-line acceptance verdict; all lines are printed after the run."""

    def _report(n: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE_LINES.append(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
