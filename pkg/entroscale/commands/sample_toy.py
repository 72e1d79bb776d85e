import logging

from entroscale.commands import SAMPLE_STREAM, Command, check_patch_grid, stream
from entroscale.core.config import ExperimentConfig
from entroscale.core.errors import ExitCode
from entroscale.schemas.trace import EntropyRecord
from entroscale.services.attention import ScalePolicy
from entroscale.services.toy_diffusion import sample
from entroscale.storage.checkpoint import load_checkpoint
from entroscale.storage.images import write_pgm
from entroscale.storage.tables import write_csv

logger = logging.getLogger(__name__)


def sample_toy(config: ExperimentConfig) -> int:
    """
    Sample one image from a checkpoint at sample_height × sample_width.

    The noise stream depends only on the seed, so at the training resolution
    both policies produce the same image bytes.
    """
    state = load_checkpoint(config.checkpoint_path)
    height, width = config.sample_height, config.sample_width
    check_patch_grid(state, height, width)
    policy = ScalePolicy.from_name(config.sample_policy, state.train_tokens)
    logger.info("Sampling %dx%d under %s", height, width, policy.name)

    image, trace = sample(state, height, width, policy, stream(config, SAMPLE_STREAM))

    out = config.output_dir
    write_pgm(out / "sample.pgm", image.numpy())
    write_csv(out / "entropy_trace.csv", EntropyRecord, trace.records)
    print(
        f"sample-toy: {height}x{width} {policy.name}, "
        f"mean attention entropy {trace.mean_entropy():.5f}"
    )
    return ExitCode.OK


command = Command(
    name="sample-toy",
    help="Sample an image from a trained checkpoint and log attention entropy",
    handler=sample_toy,
)
