import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stfusion.models import FusionNet

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def stream_model():
    """Untrained streaming model with batch-norm statistics calibrated on unit-scale noise.

    Fresh running statistics (mean 0, var 1) leave eval-mode outputs pinned
    at the sigmoid clamp, which would make perturbation tests vacuous.
    """
    model = FusionNet("stream", seed=5)
    rng = np.random.default_rng(5)
    for _ in range(40):
        model.forward(rng.normal(size=(2, 256 + 128 * 15, 3)).astype(np.float32), training=True)
    model.params.zero_grads()
    return model
