import pytest

from swarmpid.pid import PidConfig
from swarmpid.plants import gyroscope_map, gyroscope_plant, motor_plant, tachometer_map
from swarmpid.pso import TuningChannel

ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail=""):
    ACCEPTANCE[number] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[n]
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {n:2d}. {title}" + (f" ({detail})" if detail else ""))


@pytest.fixture
def motor_channel():
    return TuningChannel(motor_plant(), tachometer_map(), 2.5, PidConfig(dt=1e-3))


@pytest.fixture
def short_motor_channel():
    """Coarser and shorter than the default so swarm tests stay quick."""
    return TuningChannel(motor_plant(), tachometer_map(), 2.5, PidConfig(dt=5e-3), window=1.0)


@pytest.fixture
def gyro_channel():
    return TuningChannel(gyroscope_plant(), gyroscope_map(), 3.5, PidConfig(1e-3, -2.5, 2.5))
