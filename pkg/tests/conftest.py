import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tvflow.grid import Grid2D, Shape, make_field

settings.register_profile("tvflow", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("tvflow")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid32():
    return Grid2D.unit_square(32)


@pytest.fixture(scope="session")
def disk32(grid32):
    return make_field(grid32, Shape.disk((0.5, 0.5), 0.25, 1.0))


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; lines are echoed at the end."""
    def _verdict(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed
    return _verdict


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
