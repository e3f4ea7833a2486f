from functionality.artifacts import apply_overrides
from functionality.logger import get_logger
from service.pipeline_service import resolve_records, run_detect

logger = get_logger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("detect", help="detect PQRST fiducials and score them against annotations")
    parser.add_argument("--record", "--records", dest="records", nargs="+", help="record names (default: all 48)")
    parser.add_argument("--threshold-factor", type=float, help="amplitude gate as a fraction of the 95th percentile")
    parser.add_argument("--min-block-width", type=int)
    parser.add_argument("--tolerance", type=int, help="match tolerance in samples")
    parser.set_defaults(handler=detect)


def detect(args, config):
    config = apply_overrides(resolve_records(config, args.records), {
        "detection.threshold_factor": args.threshold_factor,
        "detection.min_block_width": args.min_block_width,
        "detection.match_tolerance": args.tolerance,
    })
    aggregate = run_detect(config)
    r = aggregate["r"]
    logger.info(f"R peaks: sensitivity {r['sensitivity']:.4f}, precision {r['precision']:.4f}")
    if aggregate["p"]:
        p = aggregate["p"]
        logger.info(f"P peaks: sensitivity {p['sensitivity']:.4f}, precision {p['precision']:.4f}")
    return 0
