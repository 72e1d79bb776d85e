"""Pytest configuration and fixtures."""

from collections.abc import Callable, Iterator
from pathlib import Path
from typing import Any

import pytest

from entroscale.core.config import ExperimentConfig, get_settings
from entroscale.services import entropy_theory
from entroscale.services.entropy_theory import GaussianTokenModel
from entroscale.services.numeric_core import RngStream
from entroscale.services.toy_diffusion import (
    TrainConfig,
    TrainState,
    build_state,
    train,
    two_blob_images,
)

# Short schedule for tests that only need a working sampler
QUICK_DIFFUSION = {"diffusion_steps": 10, "train_steps": 3, "batch_size": 4}


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    """Re-read ENTROSCALE_* settings for every test."""
    monkeypatch.delenv("ENTROSCALE_THREADS", raising=False)
    monkeypatch.delenv("ENTROSCALE_LOG_LEVEL", raising=False)
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> RngStream:
    """Seeded random stream."""
    return RngStream(seed=42)


@pytest.fixture
def reference_model() -> GaussianTokenModel:
    """Isotropic Gaussian token model with d = d_r = 64."""
    return entropy_theory.reference_model(64, 64)


@pytest.fixture
def make_config(tmp_path: Path) -> Callable[..., ExperimentConfig]:
    """Factory for experiment configs writing into a temporary directory."""

    def factory(**overrides: Any) -> ExperimentConfig:
        values: dict[str, Any] = {"output_dir": tmp_path / "out"}
        values.update(overrides)
        return ExperimentConfig(**values)

    return factory


@pytest.fixture
def quick_train_config() -> TrainConfig:
    """Reference architecture with a 10-step diffusion schedule."""
    return TrainConfig.from_experiment(ExperimentConfig(**QUICK_DIFFUSION))


@pytest.fixture
def random_state(quick_train_config: TrainConfig) -> TrainState:
    """Untrained denoiser (seed 3) recorded at T = 16 tokens."""
    return build_state(quick_train_config, RngStream(seed=3))


def blob_data(size: int) -> Callable[[int, RngStream], Any]:
    def data(count: int, stream: RngStream) -> Any:
        return two_blob_images(count, size, stream)

    return data


@pytest.fixture(scope="session")
def trained_state() -> TrainState:
    """Reference 500-step training run at 8×8 (T = 16 tokens)."""
    config = TrainConfig.from_experiment(ExperimentConfig())
    return train(config, blob_data(config.image_size), RngStream(seed=42, stream_id=30))
