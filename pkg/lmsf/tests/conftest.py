import numpy as np
import pytest

from lmsf.core_processes.model_assembly.build_model import build_model
from lmsf.core_processes.model_assembly.fuse_model import fuse_model
from lmsf.data_layer.model_config.model_config import ModelConfig

SMALL_INPUT_SIZE = 64


class SmallModels:
    config: ModelConfig
    train_model = None
    deploy_model = None


def make_small_config(**changes) -> ModelConfig:
    """A narrow network that keeps every module but runs a 64x64 forward in well under a second."""
    fields = dict(
        input_size=SMALL_INPUT_SIZE,
        width_multiplier=1.0,
        stem_width=8,
        stage_widths=[16, 16, 32, 32],
        fused_channels=16,
        head_channels=16,
        shared_block_count=2,
        ema_reduction=4,
        ema_spatial_kernel=5,
        tfe_reduction=4,
        gn_groups=2,
        min_instance_area=1,
    )
    fields.update(changes)
    return ModelConfig(**fields)


def pytest_sessionstart():
    SmallModels.config = make_small_config()
    SmallModels.train_model = build_model(SmallModels.config, seed=0)
    SmallModels.deploy_model = fuse_model(SmallModels.train_model)


def get_small_models() -> SmallModels:
    # pytest_sessionstart only runs for conftests found at startup
    if SmallModels.train_model is None:
        pytest_sessionstart()
    return SmallModels


@pytest.fixture
def small_config() -> ModelConfig:
    return get_small_models().config


@pytest.fixture
def small_train_model():
    return get_small_models().train_model


@pytest.fixture
def small_deploy_model():
    return get_small_models().deploy_model


@pytest.fixture
def random_number_generator() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_image(random_number_generator) -> np.ndarray:
    return random_number_generator.random((1, 3, SMALL_INPUT_SIZE, SMALL_INPUT_SIZE), dtype=np.float32)
