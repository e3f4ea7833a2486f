from functionality.artifacts import apply_overrides
from functionality.logger import get_logger
from service.pipeline_service import resolve_records, run_features

logger = get_logger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("features", help="build the fused feature dataset, split and normalization stats")
    parser.add_argument("--records", nargs="+")
    parser.add_argument("--split", choices=["stratified-beat", "by-record"])
    parser.add_argument("--rr", choices=["r", "t"], help="measure t_rr between R peaks or between T peaks")
    parser.add_argument("--mode", choices=["six", "six+2", "ten"], help="fusion mode recorded for the training stages")
    parser.set_defaults(handler=features)


def features(args, config):
    config = apply_overrides(resolve_records(config, args.records), {
        "split_strategy": args.split,
        "rr_reference": args.rr,
        "feature_mode": args.mode,
    })
    summary = run_features(config)
    logger.info(f"features: {summary['beats']} beats ({summary['train']} train / {summary['test']} test)")
    return 0
