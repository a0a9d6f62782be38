import pytest
from hypothesis import settings

import kppdrift as kd

settings.register_profile("ci", max_examples=25, deadline=None)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def torus32():
    return kd.PeriodicCell("torus", 1.0, 1.0, 32, 32)


@pytest.fixture(scope="session")
def torus64():
    return kd.PeriodicCell("torus", 1.0, 1.0, 64, 64)


@pytest.fixture(scope="session")
def strip32():
    return kd.PeriodicCell("strip", 1.0, 1.0, 32, 32)


@pytest.fixture(scope="session")
def e1():
    return kd.Direction.of(1.0, 0.0)


@pytest.fixture(scope="session")
def e2():
    return kd.Direction.of(0.0, 1.0)
