import pytest

CRITERIA = range(1, 9)
_results: dict[int, str] = {}


@pytest.fixture(scope="session")
def record_criterion():
    """Store the PASS/FAIL line for an acceptance criterion; printed in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        _results[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in CRITERIA:
        terminalreporter.write_line(_results.get(n, f"criterion {n}: FAIL  did not complete"))
