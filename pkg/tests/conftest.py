import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ncsigma.instanton import InstantonConfig, build_instanton
from ncsigma.module import geometry_from_theta, theta_of_alpha

settings.register_profile("ncsigma", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ncsigma")

BOCA_THETA = 0.37


@pytest.fixture(scope="session")
def boca_geometry():
    return geometry_from_theta(BOCA_THETA)


@pytest.fixture(scope="session")
def q2_geometry():
    return theta_of_alpha(-1, 2, -1.5)


@pytest.fixture(scope="session")
def boca_build(boca_geometry):
    return build_instanton(InstantonConfig(boca_geometry, 1j))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
