import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def channel_prob():
    from helpers import channel
    return channel()


@pytest.fixture(scope="session")
def channel_state(channel_prob):
    from helpers import outflow_controls
    from mpoc.state import solve_state
    c = outflow_controls(channel_prob, tangential=0.2, rotation=0.3)
    return solve_state(channel_prob, c, tol=1e-13)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record one acceptance line: ``verdict(number, title, ok, detail)``."""
    def record(number, title, ok, detail):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        _VERDICTS.append((number, line))
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_VERDICTS):
            terminalreporter.write_line(line)
