import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_CRITERIA = []


@pytest.fixture(scope="session")
def criterion_log():
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
