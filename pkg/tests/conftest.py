import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Return ``record(number, checks)``; prints one verdict line and asserts every check."""

    def record(number: int, checks: list) -> None:
        ok = all(passed for _, passed, _ in checks)
        failed = [f"{name} ({detail})" for name, passed, detail in checks if not passed]
        summary = "; ".join(f"{name}: {detail}" for name, _, detail in checks)
        line = f"[criterion {number}] {'PASS' if ok else 'FAIL'} {summary}"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
        assert ok, "failed checks: " + "; ".join(failed)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
