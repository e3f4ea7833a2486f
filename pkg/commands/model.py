from functionality.artifacts import apply_overrides
from functionality.logger import get_logger
from service.network_service import PRESET_SIZES
from service.pipeline_service import run_eval, run_quantize, run_train

logger = get_logger(__name__)

MODEL_CHOICES = list(PRESET_SIZES) + ["LSTM64", "BILSTM32", "BILSTM64"]
FEATURE_CHOICES = ["six", "six+2", "ten"]


def _model_flags(parser):
    parser.add_argument("--preset", choices=MODEL_CHOICES)
    parser.add_argument("--features", choices=FEATURE_CHOICES)


def register(subparsers):
    parser = subparsers.add_parser("train", help="train one model on the fused features")
    _model_flags(parser)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch", type=int)
    parser.add_argument("--optimizer", choices=["adam", "sgd"])
    parser.add_argument("--lr", type=float)
    parser.add_argument("--dropout", type=float)
    parser.add_argument("--class-weights", action="store_true", default=None)
    parser.set_defaults(handler=train)

    parser = subparsers.add_parser("quantize", help="post-training quantization of a trained model")
    _model_flags(parser)
    parser.add_argument("--scheme", action="append", choices=["fp32", "fp16", "int8", "drq"])
    parser.add_argument("--calib-size", type=int)
    parser.add_argument("--drq-granularity", choices=["per-tensor", "per-sample"],
                        help="one dynamic activation range per tensor or per sample")
    parser.set_defaults(handler=quantize)

    parser = subparsers.add_parser("eval", help="confusion matrix and per-class metrics on the test split")
    _model_flags(parser)
    parser.add_argument("--scheme", default="fp32", choices=["fp32", "fp16", "int8", "drq"])
    parser.set_defaults(handler=evaluate)


def _apply_model_flags(args, config, extra=None):
    overrides = {"preset": args.preset, "feature_mode": args.features, "train.seed": args.seed}
    overrides.update(extra or {})
    return apply_overrides(config, overrides)


def train(args, config):
    config = _apply_model_flags(args, config, {
        "train.epochs": args.epochs,
        "train.batch_size": args.batch,
        "train.optimizer": args.optimizer,
        "train.learning_rate": args.lr,
        "train.dropout_rate": args.dropout,
        "train.class_weighting": args.class_weights,
    })
    path = run_train(config)
    logger.info(f"model written to {path}")
    return 0


def quantize(args, config):
    config = _apply_model_flags(args, config, {
        "quantization.calib_size": args.calib_size,
        "quantization.schemes": args.scheme,
        "quantization.drq_granularity": args.drq_granularity,
    })
    report = run_quantize(config)
    for scheme, sizes in report.items():
        logger.info(f"{scheme}: {sizes['file_size']}")
    return 0


def evaluate(args, config):
    config = _apply_model_flags(args, config)
    report = run_eval(config, args.scheme)
    logger.info(f"accuracy {report['metrics']['accuracy']}%, F1 {report['metrics']['f1']}")
    return 0
