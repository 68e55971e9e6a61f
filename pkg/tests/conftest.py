import pytest

# lines recorded by the acceptance criteria, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
