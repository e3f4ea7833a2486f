from functionality.artifacts import apply_overrides
from functionality.logger import get_logger
from service.pipeline_service import resolve_records, run_denoise, run_ingest

logger = get_logger(__name__)


def register(subparsers):
    parser = subparsers.add_parser("ingest", help="parse headers, signals and annotations; write the beat inventory")
    parser.add_argument("--records", nargs="+", help="record names (default: all 48)")
    parser.add_argument("--lead", type=int, help="signal index to read (default 0, MLII)")
    parser.set_defaults(handler=ingest)

    parser = subparsers.add_parser("denoise", help="write one record's raw and wavelet-denoised lead as CSV")
    parser.add_argument("--record", required=True)
    parser.add_argument("--lead", type=int)
    parser.set_defaults(handler=denoise)


def ingest(args, config):
    config = apply_overrides(resolve_records(config, args.records), {"lead_index": args.lead})
    summary = run_ingest(config)
    logger.info(f"ingest: {summary['records']} records, {summary['beats']} selected beats")
    return 0


def denoise(args, config):
    config = apply_overrides(config, {"lead_index": args.lead})
    path = run_denoise(config, args.record)
    logger.info(f"denoised record {args.record} written to {path}")
    return 0
