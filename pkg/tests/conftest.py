import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# first call into a jitted kernel pays compilation; property tests must not
# time out on it
settings.register_profile(
    "srcloc",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("srcloc")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
