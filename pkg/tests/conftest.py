import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# property suites: 10^3 cases per invariant, derandomized (fixed master seed)
settings.register_profile("iukit", max_examples=1000, derandomize=True, deadline=None, database=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "iukit"))


@pytest.fixture
def power1():
    from iukit.kernels import JumpKernel, ScalingFunction

    def make(dim=2, alpha=1.0):
        return JumpKernel(dim, ScalingFunction.power(alpha))
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance verdicts, one line per criterion, echoed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
