import pytest

from lidarfog import SensorModel, build_table, fog_from_alpha


@pytest.fixture(scope="session")
def sensor():
    return SensorModel()


@pytest.fixture(scope="session")
def fog06():
    return fog_from_alpha(0.06)


@pytest.fixture(scope="session")
def table06(fog06, sensor):
    return build_table(fog06, sensor)
