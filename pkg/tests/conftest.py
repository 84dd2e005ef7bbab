"""Shared fixtures: the acceptance suite reports one PASS/FAIL line per criterion."""
import pytest

_LINES = []


@pytest.fixture
def criterion(capsys):
    """``criterion(k, passed, detail)`` prints and records the verdict, then asserts it."""

    def record(k, passed, detail):
        line = f"CRITERION {k:>2}: {'PASS' if passed else 'FAIL'} - {detail}"
        _LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
