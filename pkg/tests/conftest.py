import numpy as np
import pytest

from sgdvit.config import ModelConfig, TrainConfig, TrackerConfig
from sgdvit.autodiff import Tensor, make_rng, precision, default_dtype
from sgdvit.data import SynthSpec


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def f64():
    with precision(np.float64):
        yield


@pytest.fixture
def tiny_config():
    return ModelConfig(
        channels=16,
        heads=2,
        backbone_channels=(8, 8, 16, 16),
        ffn_mult=2,
    )


@pytest.fixture
def fast_train():
    return TrainConfig(iterations=3, log_every=1, seed=5)


@pytest.fixture
def tracker_config():
    return TrackerConfig()


@pytest.fixture
def small_spec():
    return SynthSpec(
        frame_size=(160, 120),
        frames=4,
        base_size=(30.0, 24.0),
        start=(70.0, 60.0),
        velocity=(2.0, 1.0),
        clutter=1,
        seed=3,
    )


@pytest.fixture
def make_crop(rng):
    """Random standardized (3, S, S) crops in the current default dtype."""

    def make(size):
        return Tensor(rng.normal(size=(3, size, size)).astype(default_dtype()))

    return make
