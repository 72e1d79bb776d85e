"""Tests for the command-line interface."""

from collections.abc import Callable
from pathlib import Path

import pytest

from entroscale.commands import TRAIN_STREAM
from entroscale.core.config import ExperimentConfig
from entroscale.core.errors import ExitCode
from entroscale.main import build_parser, main
from entroscale.services.numeric_core import RngStream
from entroscale.services.toy_diffusion import TrainConfig, build_state
from entroscale.storage.checkpoint import HEADER, encode_checkpoint

THEORY_ARGS = [
    "--decomposition_cases", "50",
    "--quadrature_grid", "4",
    "--theory_sizes", "256,512",
    "--trials", "40",
]
SCAN_ARGS = ["--scan_sizes", "64,128,256", "--trials", "10", "--query_rows", "2"]
TOY_ARGS = ["--diffusion_steps", "10", "--train_steps", "2", "--batch_size", "4"]


def run(command: str, out: Path, *args: str) -> int:
    return main([command, "--output_dir", str(out), *args])


def test_every_config_field_has_an_override() -> None:
    """Test each ExperimentConfig field is reachable as --key and --dashed-key."""
    parser = build_parser()
    args = parser.parse_args(["train-toy", "--train-steps", "5", "--seed", "9"])

    assert args.train_steps == "5"
    assert args.seed == "9"
    for name in ExperimentConfig.model_fields:
        assert name in vars(args)


def test_verify_theory_passes_and_is_deterministic(tmp_path: Path) -> None:
    """Test the theory suites pass and theory.csv is byte-stable."""
    assert run("verify-theory", tmp_path / "a", *THEORY_ARGS) == ExitCode.OK
    assert run("verify-theory", tmp_path / "b", *THEORY_ARGS) == ExitCode.OK

    first = (tmp_path / "a" / "theory.csv").read_bytes()
    assert first == (tmp_path / "b" / "theory.csv").read_bytes()
    lines = first.decode().splitlines()
    assert lines[0] == "check_name,n,predicted,measured,stderr,pass"
    assert {line.split(",")[0] for line in lines[1:]} == {
        "decomposition_identity",
        "exp_moment",
        "yexp_moment",
        "entropy_law",
        "moment_concentration",
        "moment_concentration_max",
    }
    assert all(line.endswith(",true") for line in lines[1:])


def test_verify_theory_reports_failures(tmp_path: Path) -> None:
    """Test a variance far outside the law's regime fails with exit 1."""
    # ln 256 − 16/2 < 0, which no entropy can match
    code = run("verify-theory", tmp_path, *THEORY_ARGS, "--score_variance", "16")

    assert code == ExitCode.CHECK_FAILED
    assert ",false" in (tmp_path / "theory.csv").read_text()


def test_single_trial_is_config_error(tmp_path: Path) -> None:
    """Test trials=1 is rejected before any work."""
    assert run("verify-theory", tmp_path, "--trials", "1") == ExitCode.CONFIG_ERROR
    assert not (tmp_path / "theory.csv").exists()


def test_config_file_is_read(tmp_path: Path) -> None:
    """Test --config loads a key=value file."""
    path = tmp_path / "bad.env"
    path.write_text("trials=1\n")

    assert main(["verify-theory", "--config", str(path)]) == ExitCode.CONFIG_ERROR


def test_entropy_scan_outputs(tmp_path: Path) -> None:
    """Test both scan tables, their fit footers and a stable plot."""
    assert run("entropy-scan", tmp_path / "a", *SCAN_ARGS) == ExitCode.OK
    assert run("entropy-scan", tmp_path / "b", *SCAN_ARGS) == ExitCode.OK

    for name in ("scan_fixed.csv", "scan_scaled.csv", "scan.svg"):
        first, second = (tmp_path / run_dir / name for run_dir in ("a", "b"))
        assert first.read_bytes() == second.read_bytes()
    fixed = (tmp_path / "a" / "scan_fixed.csv").read_text().splitlines()
    scaled = (tmp_path / "a" / "scan_scaled.csv").read_text().splitlines()
    assert fixed[0] == "n,ln_n,lambda,mean_entropy,stderr"
    assert len(fixed) == 5
    assert fixed[-1].startswith("# fit policy=fixed slope=")
    assert scaled[-1].startswith("# fit policy=entropy_preserving slope=")


def test_entropy_scan_needs_two_sizes(tmp_path: Path) -> None:
    """Test a single scan size is a config error."""
    code = run("entropy-scan", tmp_path, "--scan_sizes", "64")

    assert code == ExitCode.CONFIG_ERROR


def test_unwritable_output_dir(
    tmp_path: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    """Test an output path blocked by a file exits 3 and names the path."""
    blocker = tmp_path / "blocker"
    blocker.write_text("")

    assert run("entropy-scan", blocker, *SCAN_ARGS) == ExitCode.IO_ERROR
    assert str(blocker) in capsys.readouterr().err


def test_train_toy_zero_steps_saves_initialisation(
    make_config: Callable[..., ExperimentConfig],
) -> None:
    """Test steps=0 writes the seeded initial parameters and an empty loss table."""
    config = make_config(diffusion_steps=10, train_steps=0, batch_size=4)
    out = config.output_dir

    assert run("train-toy", out, *TOY_ARGS, "--train_steps", "0") == ExitCode.OK

    initial = build_state(
        TrainConfig.from_experiment(config), RngStream(42, TRAIN_STREAM).child(0)
    )
    assert (out / "denoiser.ckpt").read_bytes() == encode_checkpoint(initial)
    assert (out / "loss.csv").read_text() == "step,loss\n"


def test_train_toy_is_deterministic(tmp_path: Path) -> None:
    """Test the same seed gives identical checkpoint and loss bytes."""
    assert run("train-toy", tmp_path / "a", *TOY_ARGS) == ExitCode.OK
    assert run("train-toy", tmp_path / "b", *TOY_ARGS) == ExitCode.OK

    for name in ("denoiser.ckpt", "loss.csv"):
        first, second = (tmp_path / run_dir / name for run_dir in ("a", "b"))
        assert first.read_bytes() == second.read_bytes()
    assert len((tmp_path / "a" / "loss.csv").read_text().splitlines()) == 3


@pytest.fixture
def checkpoint(tmp_path: Path) -> Path:
    """Briefly trained checkpoint on a 10-step schedule."""
    assert run("train-toy", tmp_path / "train", *TOY_ARGS) == ExitCode.OK
    return tmp_path / "train" / "denoiser.ckpt"


def test_sample_toy_policies_match_at_training_size(
    tmp_path: Path, checkpoint: Path
) -> None:
    """Test both policies give identical PGM bytes at 8×8 (N = T)."""
    for policy in ("fixed", "entropy_preserving"):
        code = run(
            "sample-toy",
            tmp_path / policy,
            "--checkpoint", str(checkpoint),
            "--sample_policy", policy,
        )
        assert code == ExitCode.OK

    fixed_image = (tmp_path / "fixed" / "sample.pgm").read_bytes()
    assert fixed_image == (tmp_path / "entropy_preserving" / "sample.pgm").read_bytes()
    assert fixed_image.startswith(b"P2\n8 8\n255\n")
    trace = (tmp_path / "fixed" / "entropy_trace.csv").read_text().splitlines()
    assert trace[0] == "timestep,layer_id,n_tokens,policy,mean_entropy,fell_back"
    assert len(trace) == 1 + 10 * 2
    assert all(line.endswith(",false") for line in trace[1:])


def test_sample_toy_non_square(tmp_path: Path, checkpoint: Path) -> None:
    """Test sampling at a different aspect ratio."""
    code = run(
        "sample-toy",
        tmp_path / "wide",
        "--checkpoint", str(checkpoint),
        "--sample_height", "8",
        "--sample_width", "16",
    )

    assert code == ExitCode.OK
    assert (tmp_path / "wide" / "sample.pgm").read_bytes().startswith(b"P2\n16 8\n")


def test_sample_toy_bad_checkpoint(tmp_path: Path, checkpoint: Path) -> None:
    """Test corrupted, headless-architecture or missing checkpoints exit 4."""
    corrupt = tmp_path / "corrupt.ckpt"
    corrupt.write_bytes(b"NOTACKPT" + bytes(64))
    payload = checkpoint.read_bytes()
    fields = list(HEADER.unpack(payload[: HEADER.size]))
    fields[5] = 0  # n_heads
    no_heads = tmp_path / "no_heads.ckpt"
    no_heads.write_bytes(HEADER.pack(*fields) + payload[HEADER.size :])

    for path in (corrupt, no_heads, tmp_path / "missing.ckpt"):
        code = run("sample-toy", tmp_path / "out", "--checkpoint", str(path))
        assert code == ExitCode.CHECKPOINT_ERROR


def test_resolution_sweep(tmp_path: Path, checkpoint: Path) -> None:
    """Test the sweep table covers every size under both policies."""
    code = run(
        "resolution-sweep",
        tmp_path / "sweep",
        "--checkpoint", str(checkpoint),
        "--diffusion_steps", "10",
        "--sweep_sizes", "4,8,16",
    )

    assert code == ExitCode.OK
    lines = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
    assert lines[0] == (
        "policy,height,width,n_tokens,ln_n,lambda_ratio,mean_entropy,mean_gap"
    )
    assert len(lines) == 1 + 3 * 2
    at_training_size = [line for line in lines[1:] if ",8,8,16," in line]
    assert len(at_training_size) == 2
    assert (tmp_path / "sweep" / "sweep.svg").exists()


def test_resolution_sweep_measures_gaps_from_training_size(tmp_path: Path) -> None:
    """Test a 16×16 checkpoint swept under 8×8 defaults has zero gap at 16×16."""
    train = tmp_path / "train"
    assert run("train-toy", train, *TOY_ARGS, "--image_size", "16") == ExitCode.OK

    code = run(
        "resolution-sweep",
        tmp_path / "sweep",
        "--checkpoint", str(train / "denoiser.ckpt"),
        "--sweep_sizes", "8,16",
    )

    assert code == ExitCode.OK
    lines = (tmp_path / "sweep" / "sweep.csv").read_text().splitlines()
    at_training_size = [line for line in lines[1:] if ",16,16,64," in line]
    assert len(at_training_size) == 2
    assert all(line.split(",")[-1] == "0" for line in at_training_size)
    assert all(line.split(",")[-1] != "0" for line in lines[1:3])


def test_sizes_off_the_checkpoint_patch_grid(tmp_path: Path) -> None:
    """Test sides that the checkpoint's patch size does not divide exit 2."""
    train = tmp_path / "train"
    args = [*TOY_ARGS, "--patch_size", "4"]
    assert run("train-toy", train, *args) == ExitCode.OK
    ckpt = ["--checkpoint", str(train / "denoiser.ckpt")]

    sweep = run("resolution-sweep", tmp_path / "sweep", *ckpt, "--sweep_sizes", "4,6")
    sample = run("sample-toy", tmp_path / "sample", *ckpt, "--sample_height", "6")

    assert sweep == ExitCode.CONFIG_ERROR
    assert sample == ExitCode.CONFIG_ERROR
    assert not (tmp_path / "sweep" / "sweep.csv").exists()
