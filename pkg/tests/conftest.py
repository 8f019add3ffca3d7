import pytest

_VERDICTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def verdict():
    """Record one acceptance criterion; the summary prints a PASS/FAIL line for each."""

    def record(label: str, passed: bool, detail: str = "") -> bool:
        _VERDICTS.append((label, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, passed, detail in _VERDICTS:
        line = f"{'PASS' if passed else 'FAIL'} {label}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
