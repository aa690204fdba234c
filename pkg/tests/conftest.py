import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from otfs_hybrid.geometry import DEFAULT_GEOMETRY, FrameGeometry

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def default_geometry():
    return FrameGeometry(**DEFAULT_GEOMETRY)


@pytest.fixture
def small_geometry():
    # M <= 16, N <= 4 keeps dense oracles cheap
    return FrameGeometry(M=16, N=4, N_dd=2, N_tf=2, L_cp=4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
