import os

# the determinism checks compare 1 and 4 worker threads; numba fixes its pool size at import
os.environ.setdefault("NUMBA_NUM_THREADS", "4")

import pytest  # noqa: E402
from hypothesis import HealthCheck, settings  # noqa: E402

settings.register_profile("mpac", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large])
settings.load_profile("mpac")


@pytest.fixture(scope="session")
def fuzz_model():
    """A small network trained briefly on smooth clouds, covering every mode's variants."""
    from helpers import train_small_model
    return train_small_model()


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
