import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pulse import init_random_generator

settings.register_profile(
    "default", max_examples=30, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

# lines recorded by the acceptance tests, echoed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def desk_spec():
    """d=64, k=6, 32x32 output."""
    return init_random_generator(seed=0)


@pytest.fixture(scope="session")
def tiny_spec():
    """d=8, k=4, 8x8 output; small enough for element-wise finite differences."""
    return init_random_generator(d=8, k=4, r0=4, widths=(4, 4, 3, 3), seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
