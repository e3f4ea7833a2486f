from functionality.artifacts import apply_overrides
from functionality.logger import get_logger
from service.pipeline_service import run_ablation, run_benchmark, run_reproduce

logger = get_logger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("benchmark", help="evaluate every trained preset under every scheme")
    parser.add_argument("--presets", nargs="+", choices=["T", "S", "M", "L"])
    parser.add_argument("--calib-size", type=int)
    parser.set_defaults(handler=benchmark)

    parser = subparsers.add_parser("reproduce", help="run the whole pipeline and write the benchmark grid")
    parser.add_argument("--presets", nargs="+", choices=["T", "S", "M", "L"])
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch", type=int)
    parser.set_defaults(handler=reproduce)

    parser = subparsers.add_parser("ablation", help="feature-fusion ablation and LSTM vs Bi-LSTM comparison")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch", type=int)
    parser.set_defaults(handler=ablation)


def _log_grid(rows):
    for row in rows:
        logger.info(f"{row.preset} {row.scheme}: accuracy {row.accuracy}%, {row.file_size_bytes} bytes")


def benchmark(args, config):
    config = apply_overrides(config, {"presets": args.presets, "quantization.calib_size": args.calib_size})
    _log_grid(run_benchmark(config))
    return 0


def reproduce(args, config):
    config = apply_overrides(config, {
        "presets": args.presets,
        "train.epochs": args.epochs,
        "train.batch_size": args.batch,
        "train.seed": args.seed,
    })
    _log_grid(run_reproduce(config))
    return 0


def ablation(args, config):
    config = apply_overrides(config, {
        "train.epochs": args.epochs,
        "train.batch_size": args.batch,
        "train.seed": args.seed,
    })
    summary = run_ablation(config)
    logger.info(f"ablation: {summary}")
    return 0
