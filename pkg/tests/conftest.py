import os
import warnings

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# numba warns about the system TBB build when it first picks a threading layer
warnings.filterwarnings("ignore", message=".*TBB.*")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running checks")


ACCEPTANCE = {}


@pytest.fixture
def record_criterion():
    """Store a one-line verdict per acceptance criterion and echo it."""
    def record(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
