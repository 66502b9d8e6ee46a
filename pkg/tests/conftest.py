"""Collect acceptance verdicts and print one line per criterion at the end of the run."""

import pytest

_VERDICTS: dict[str, str] = {}


@pytest.fixture
def verdict(request):
    """Call ``verdict(passed, detail)`` once per acceptance criterion."""

    def record(passed: bool, detail: str) -> bool:
        _VERDICTS[request.node.name] = f"{'PASS' if passed else 'FAIL'}  {request.node.name}: {detail}"
        print(_VERDICTS[request.node.name])
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for name in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[name])
