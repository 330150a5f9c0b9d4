import math

import pytest

from outstab.devices import Profile, actuator, sensor
from outstab.spectral_core import Domain


@pytest.fixture
def unit():
    return Domain.interval(1.0)


@pytest.fixture
def square():
    return Domain.rectangle(1.0, 1.0)


@pytest.fixture
def sine_counterexample(unit):
    """k=50 on (0,1): actuator sin(2 pi x) cannot reach mode 1, which the sensor sees."""
    return unit, 50.0, [actuator([(0.0, 1.0)], Profile.sine_product([2]), "a")], [sensor([(0.0, 1.0)], label="s")]


@pytest.fixture
def half_actuator(unit):
    return unit, 50.0, [actuator([(0.0, 0.5)], label="a")], [sensor([(0.0, 1.0)], label="s")]


SQRT2_OVER_PI = math.sqrt(2) / math.pi


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


@pytest.fixture
def record_criterion(request):
    """Log one ``CRITERION n: PASS|FAIL detail`` line and echo it immediately."""
    log = request.config.stash[_ACCEPTANCE_KEY]

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        log.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE_KEY, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(log):
        terminalreporter.write_line(line)
