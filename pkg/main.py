import argparse
import sys

from commands import benchmark, detect, features, ingest, model
from config import LOG_LEVEL
from functionality.artifacts import apply_overrides, read_config_file
from functionality.errors import PipelineError
from functionality.logger import configure_logging, get_logger
from schemas.pipeline import PipelineConfig

logger = get_logger("ecg")

COMMANDS = [ingest, detect, features, model, benchmark]


def _add_global_flags(parser, default=None):
    parser.add_argument("--config", default=default, help="key = value file applied on top of the defaults")
    parser.add_argument("--log-level", default=LOG_LEVEL if default is None else default)
    parser.add_argument("--threads", type=int, default=default)
    parser.add_argument("--data-dir", default=default)
    parser.add_argument("--out", default=default, help="results directory")
    parser.add_argument("--seed", type=int, default=default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ecg", description="MIT-BIH heartbeat classification with compact Bi-LSTMs")
    _add_global_flags(parser)

    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    # global flags are accepted after the subcommand too; SUPPRESS keeps values given before it
    for subparser in subparsers.choices.values():
        _add_global_flags(subparser, argparse.SUPPRESS)
    return parser


def build_config(args) -> PipelineConfig:
    """Defaults, then the --config file, then command-line flags."""
    config = read_config_file(args.config) if args.config else PipelineConfig()
    return apply_overrides(config, {
        "threads": args.threads,
        "data_dir": args.data_dir,
        "output_dir": args.out,
        "seed": args.seed,
    })


def run_subcommand(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    configure_logging(args.log_level)
    try:
        config = build_config(args)
        return args.handler(args, config)
    except PipelineError as exc:
        logger.error(f"[{exc.category}] {exc.detail}")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(run_subcommand())
