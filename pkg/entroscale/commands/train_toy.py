import logging

from torch import Tensor

from entroscale.commands import TRAIN_STREAM, Command, stream
from entroscale.core.config import ExperimentConfig
from entroscale.core.errors import ExitCode, NonFiniteLoss
from entroscale.schemas.training import LossRow
from entroscale.services.numeric_core import RngStream
from entroscale.services.toy_diffusion import TrainConfig, train, two_blob_images
from entroscale.storage.checkpoint import save_checkpoint
from entroscale.storage.tables import write_csv

logger = logging.getLogger(__name__)


def train_toy(config: ExperimentConfig) -> int:
    """Train the denoiser on two-blob images; write the checkpoint and loss.csv."""
    train_config = TrainConfig.from_experiment(config)

    def data(count: int, rng: RngStream) -> Tensor:
        return two_blob_images(count, config.image_size, rng)

    try:
        state = train(train_config, data, stream(config, TRAIN_STREAM))
    except NonFiniteLoss as exc:
        if exc.state is not None:
            # keep the last finite state for inspection
            save_checkpoint(config.checkpoint_path, exc.state)
        raise

    save_checkpoint(config.checkpoint_path, state)
    rows = [LossRow(step=i + 1, loss=loss) for i, loss in enumerate(state.loss_history)]
    write_csv(config.output_dir / "loss.csv", LossRow, rows)

    final = f"{state.loss_history[-1]:.5f}" if state.loss_history else "n/a"
    print(f"train-toy: {state.step} steps, final loss {final}, T={state.train_tokens}")
    return ExitCode.OK


command = Command(
    name="train-toy",
    help="Train the toy attention denoiser and save a checkpoint",
    handler=train_toy,
)
