import pytest

_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_KEY] = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Append one "[PASS|FAIL] criterion: detail" line per acceptance criterion."""
    return request.config.stash[_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash[_KEY]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
