import pytest

from ckyblowup import _backend

BACKENDS = _backend.available()

# PASS/FAIL lines collected by test_acceptance.py
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def python_backend(monkeypatch):
    monkeypatch.setenv("CKYBLOWUP_BACKEND", "python")
    return "python"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
