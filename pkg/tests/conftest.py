import pytest

from modeswitch.profiles import load_default_profile
from modeswitch.workload import balanced_family_trace

CRITERIA_LOG: list[str] = []


@pytest.fixture(scope="session")
def profile():
    return load_default_profile()


@pytest.fixture(scope="session")
def balanced_trace():
    return balanced_family_trace(55, seed=7)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LOG:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LOG:
            terminalreporter.write_line(line)
