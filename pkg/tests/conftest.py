import pytest


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture(scope="session")
def acceptance_log(request):
    """criterion number -> one-line verdict, printed in the terminal summary."""
    return request.config.acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", {})
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
