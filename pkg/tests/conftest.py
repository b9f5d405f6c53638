import copy

import pytest
from hypothesis import HealthCheck, settings

from edgesim.calibrate import CalibrationTargets, apply_params, calibrate
from edgesim.topology import build_topology
from edgesim.workload import builtin_airport_scenario, load_scenario

settings.register_profile(
    "default",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


@pytest.fixture
def airport():
    return builtin_airport_scenario()


@pytest.fixture
def topo(airport):
    return build_topology(airport)


@pytest.fixture
def workload(airport):
    return load_scenario(airport)


@pytest.fixture(scope="session")
def fitted():
    return calibrate(CalibrationTargets(), builtin_airport_scenario())


@pytest.fixture(scope="session")
def _calibrated_doc(fitted):
    return apply_params(builtin_airport_scenario(), fitted)


@pytest.fixture
def calibrated(_calibrated_doc):
    return copy.deepcopy(_calibrated_doc)
