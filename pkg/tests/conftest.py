import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from faultflow.facies import FaciesModelConfig
from faultflow.upscaling import SdGrid, generate_ensemble

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid():
    return SdGrid.logspace()


@pytest.fixture(scope="session")
def small_ensemble(grid):
    return generate_ensemble(FaciesModelConfig(k_clay=1e-3), grid, 2000, 11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, text = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {text}")
