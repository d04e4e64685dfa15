import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# Invariant suites run at least a thousand generated cases each.
settings.register_profile(
    "invariants", max_examples=1000, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("invariants")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance criteria record one line each; printed after the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
