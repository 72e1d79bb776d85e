import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError

from entroscale import __version__
from entroscale.commands import (
    Command,
    entropy_scan,
    resolution_sweep,
    sample_toy,
    train_toy,
    verify_theory,
)
from entroscale.core.config import (
    ExperimentConfig,
    get_settings,
    load_experiment_config,
)
from entroscale.core.errors import EntroscaleError, ExitCode
from entroscale.core.logging import configure_logging

logger = logging.getLogger("entroscale")

COMMANDS: list[Command] = [
    verify_theory.command,
    entropy_scan.command,
    train_toy.command,
    sample_toy.command,
    resolution_sweep.command,
]


def add_config_overrides(parser: argparse.ArgumentParser) -> None:
    """One `--key value` option per ExperimentConfig field; values win over the file."""
    group = parser.add_argument_group("config overrides")
    for name, field in ExperimentConfig.model_fields.items():
        flags = [f"--{name}"]
        if "_" in name:
            flags.append(f"--{name.replace('_', '-')}")
        group.add_argument(
            *flags,
            dest=name,
            default=None,
            metavar="VALUE",
            help=f"default: {field.default}",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="entroscale",
        description="Attention entropy experiments and entropy-preserving scaling",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for command in COMMANDS:
        sub = subparsers.add_parser(command.name, help=command.help)
        sub.add_argument("--config", type=Path, help="key=value experiment file")
        sub.add_argument(
            "--log-level", default=None, help="overrides ENTROSCALE_LOG_LEVEL"
        )
        add_config_overrides(sub)
        sub.set_defaults(handler=command.handler)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        settings = get_settings()
    except ValidationError as exc:
        configure_logging()
        logger.error("invalid environment settings: %s", exc)
        return ExitCode.CONFIG_ERROR
    configure_logging(args.log_level or settings.log_level)

    overrides = {name: getattr(args, name) for name in ExperimentConfig.model_fields}
    try:
        config = load_experiment_config(args.config, overrides)
        logger.info("Running %s", args.command)
        exit_code: int = args.handler(config)
    except EntroscaleError as exc:
        logger.error("%s", exc.detail)
        return exc.exit_code
    return exit_code


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
