import warnings

import pytest

from nhsense import EvenChainWarning

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def _quiet_even_chains():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EvenChainWarning)
        yield


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion and echo it live."""
    reporter = request.config.pluginmanager.getplugin("terminalreporter")

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
