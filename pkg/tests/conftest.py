import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bdhop.config import build_model, example_config
from bdhop.measure import SiteSpace

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def example_model(S=2, length=0.5):
    cfg = example_config(S, length)
    space = SiteSpace.uniform_grid(S, length)
    return build_model(cfg["model"], space)


@pytest.fixture(scope="session")
def model2():
    return example_model(2, 0.5)


@pytest.fixture(scope="session")
def model3():
    cfg = example_config(3, 1.0)
    cfg["model"]["c"] = {"name": "gaussian", "amplitude": 1.0, "length": 0.5}
    cfg["model"]["h"] = {"name": "gaussian", "amplitude": 1.0, "length": 0.5}
    space = SiteSpace.uniform_grid(3, 1.0)
    return build_model(cfg["model"], space)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
