import logging
import warnings

import pytest
from hypothesis import HealthCheck, settings

from swanmech.economy import UtilityFunction
from swanmech.model import ClientType, HeterogeneityParams, Scenario

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def make_scenario(sizes, costs, pops, scale=1.0, s2=0.0, a=40.0, b=16.0, eps_req=float("inf"), d=1):
    types = tuple(ClientType(i + 1, dd, c, n) for i, (dd, c, n) in enumerate(zip(sizes, costs, pops)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return Scenario(types, HeterogeneityParams(d, scale / d, s2), UtilityFunction("power", a, b), eps_req)


@pytest.fixture
def mnist():
    """Three-type MNIST-shaped scenario at unit cost 0.002."""
    sizes = (50, 120, 300)
    return make_scenario(sizes, [0.002 * s for s in sizes], (10, 5, 5), scale=784 * 2.5, d=784)


@pytest.fixture(autouse=True)
def _quiet_solver_logs():
    logging.getLogger("swanmech").setLevel(logging.ERROR)
    yield
