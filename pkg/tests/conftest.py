import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# first call into a compiled kernel pays the jit cost; without this the
# per-example deadline trips spuriously
settings.register_profile(
    "kit",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("kit")


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    from ntk_kit import warm_up

    warm_up()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
