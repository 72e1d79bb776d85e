from collections.abc import Callable
from dataclasses import dataclass

from entroscale.core.config import ExperimentConfig
from entroscale.core.errors import ConfigError
from entroscale.services import entropy_theory
from entroscale.services.numeric_core import Matrix, RngStream
from entroscale.services.toy_diffusion import TrainState

# Stream ids keep each command's draws independent of the others
THEORY_STREAM = 10
SCAN_STREAM = 20
TRAIN_STREAM = 30
SAMPLE_STREAM = 40


@dataclass(frozen=True, slots=True)
class Command:
    """A CLI subcommand: name, help text and the handler it runs."""

    name: str
    help: str
    handler: Callable[[ExperimentConfig], int]


def stream(config: ExperimentConfig, stream_id: int) -> RngStream:
    return RngStream(config.seed, stream_id)


def reference_queries(config: ExperimentConfig, rng: RngStream) -> Matrix:
    """Fixed query rows with σ² = score_variance at λ = 1/√d_key."""
    return entropy_theory.reference_queries(
        config.query_rows, config.d_proj, config.score_variance * config.d_key, rng
    )


def check_patch_grid(state: TrainState, *sides: int) -> None:
    """Reject image sides the checkpoint's patch size does not divide."""
    patch = state.arch.patch_size
    bad = sorted({side for side in sides if side % patch})
    if bad:
        raise ConfigError(
            f"image sides {bad} are not multiples of the checkpoint patch size {patch}"
        )
