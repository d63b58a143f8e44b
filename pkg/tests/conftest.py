import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from prbsim.channel import ChannelGenConfig, generate_trace
from prbsim.grid import CellConfig

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cell():
    return CellConfig()


@pytest.fixture(scope="session")
def small_cell():
    return CellConfig(num_users=3, num_prbs=8, data_symbols=4)


@pytest.fixture(scope="session")
def trace(cell):
    """A short default-scenario trace shared by env and evaluation tests."""
    return generate_trace(ChannelGenConfig(seed=11), cell, 300)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_trace(small_cell):
    cfg = ChannelGenConfig(pathloss_db=(-100.0, -103.0, -106.0), speeds_mps=(3.0, 10.0, 30.0), seed=21)
    return generate_trace(cfg, small_cell, 200)


# -- acceptance reporting -------------------------------------------------------
#
# Tests marked ``@pytest.mark.criterion(n, "title")`` get one PASS/FAIL line in
# the terminal summary, with any details they attach via ``record_property``.

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    number, title = marker.args
    details = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    _CRITERIA[number] = ("PASS" if rep.passed else "FAIL", title, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, details = _CRITERIA[number]
        line = f"criterion {number:>2}: {status}  {title}"
        terminalreporter.write_line(line + (f"  [{details}]" if details else ""))
