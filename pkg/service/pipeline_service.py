"""Stage runners behind the CLI.

Each stage reads the previous stages' files under ``output_dir`` and writes its own
directory there, always with the effective configuration beside its outputs.
"""
from pathlib import Path

import numpy as np
import pandas as pd

from functionality.artifacts import read_csv, read_json, require_artifact, write_config, write_csv, write_json
from functionality.errors import ConfigError, MissingArtifactError
from functionality.logger import get_logger
from schemas.dataset import ALL_FEATURES, FeatureMode, NormalizationStats
from schemas.network import ModelConfig, ModelParameters
from schemas.pipeline import PipelineConfig
from schemas.quantization import QuantScheme
from schemas.records import PWAVE_CODE, HeartbeatClass
from schemas.signals import BeatFiducials
from service import evaluate_service, feature_service, fiducial_service, model_store, quantize_service, wfdb_service
from service.network_service import build_config, count_flops, count_params, predict
from service.training_service import iterations_per_epoch, train
from service.utils import format_size, parallel_map
from service.wavelet_service import denoise

logger = get_logger(__name__)

FIDUCIAL_COLUMNS = ["record", "beat", "p", "q", "r", "s", "t"]


def stage_dir(config: PipelineConfig, stage: str) -> Path:
    path = Path(config.output_dir) / stage
    path.mkdir(parents=True, exist_ok=True)
    return path


def model_key(name: str, mode: FeatureMode) -> str:
    mode = FeatureMode(mode)
    return name if mode is FeatureMode.TEN else f"{name}_{mode.value.replace('+', 'plus')}"


def _denoised_record(config: PipelineConfig, record: str):
    signal = wfdb_service.read_record(config.data_dir, record, config.lead_index)
    return signal, denoise(signal.samples)


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

def run_ingest(config: PipelineConfig) -> dict:
    out = stage_dir(config, "ingest")

    def load(record):
        signal = wfdb_service.read_record(config.data_dir, record, config.lead_index)
        annotations = wfdb_service.read_annotations(config.data_dir, record)
        logger.info(f"ingested {record}: {signal.samples.size} samples, {len(annotations)} annotations")
        return record, signal.header, annotations

    loaded = parallel_map(load, config.records, config.threads)
    inventory, records = [], {}
    for record, header, annotations in loaded:
        beats = wfdb_service.build_beat_inventory(record, annotations)
        inventory.extend(beats)
        records[record] = {
            "sampling_rate_hz": header.sampling_rate_hz,
            "n_samples": header.n_samples,
            "n_signals": header.n_signals,
            "leads": [s.description for s in header.signals],
            "selected_beats": len(beats),
        }

    histogram = wfdb_service.class_distribution([a for _, _, a in loaded])
    beat_histogram = wfdb_service.class_distribution([a for _, _, a in loaded], beats_only=True)
    write_csv(pd.DataFrame(inventory, columns=["record", "sample_index", "class"]), out / "beats.csv")
    write_json(out / "class_distribution.json", {
        "counts": histogram.counts,
        "beat_counts": beat_histogram.counts,
        "selected": histogram.selected,
    })
    write_json(out / "records.json", records)
    write_config(out, config)
    return {"records": len(records), "beats": len(inventory)}


# ---------------------------------------------------------------------------
# denoise / detect
# ---------------------------------------------------------------------------

def run_denoise(config: PipelineConfig, record: str) -> Path:
    out = stage_dir(config, "denoise")
    signal, cleaned = _denoised_record(config, record)
    frame = pd.DataFrame({"sample": np.arange(cleaned.size), "raw_mv": signal.samples, "denoised_mv": cleaned})
    path = write_csv(frame, out / f"{record}.csv")
    write_config(out, config)
    return path


def _detect_record(config: PipelineConfig, record: str):
    signal, cleaned = _denoised_record(config, record)
    fiducials = fiducial_service.detect_fiducials(cleaned, signal.fs, config.detection)
    annotations = wfdb_service.read_annotations(config.data_dir, record)
    tolerance = config.detection.match_tolerance

    truth_r = [e.sample_index for e in annotations.beats(channel=0, selected_only=False)]
    score_r = fiducial_service.score_detection([b.r for b in fiducials], truth_r, tolerance)
    score_p = None
    if wfdb_service.has_annotations(config.data_dir, record, "pwave"):
        truth_p = wfdb_service.read_annotations(config.data_dir, record, "pwave").sample_indices(PWAVE_CODE)
        score_p = fiducial_service.score_detection([b.p for b in fiducials if b.p is not None], truth_p, tolerance)
    logger.info(
        f"{record}: {len(fiducials)} R peaks, sensitivity {score_r.sensitivity:.4f}, precision {score_r.precision:.4f}"
    )
    rows = [dict(record=record, beat=j, p=b.p, q=b.q, r=b.r, s=b.s, t=b.t) for j, b in enumerate(fiducials)]
    return record, rows, score_r, score_p


def run_detect(config: PipelineConfig) -> dict:
    require_artifact(Path(config.output_dir) / "ingest" / "records.json", "ingest")
    out = stage_dir(config, "detect")
    results = parallel_map(lambda r: _detect_record(config, r), config.records, config.threads)

    rows = [row for _, record_rows, _, _ in results for row in record_rows]
    frame = pd.DataFrame(rows, columns=FIDUCIAL_COLUMNS)
    for column in ("p", "q", "s", "t"):
        frame[column] = frame[column].astype("Int64")
    write_csv(frame, out / "fiducials.csv")

    r_scores = [s for _, _, s, _ in results]
    p_scores = [s for _, _, _, s in results if s is not None]
    summary = {
        "match_tolerance": config.detection.match_tolerance,
        "records": {
            record: {"r": score_r.model_dump(), "p": score_p.model_dump() if score_p else None}
            for record, _, score_r, score_p in results
        },
        "aggregate": {
            "r": fiducial_service.aggregate_scores(r_scores, config.detection.match_tolerance).model_dump(),
            "p": fiducial_service.aggregate_scores(p_scores, config.detection.match_tolerance).model_dump()
            if p_scores else None,
        },
    }
    write_json(out / "detection_scores.json", summary)
    write_config(out, config)
    return summary["aggregate"]


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------

def _fiducials_from_frame(frame: pd.DataFrame) -> list[BeatFiducials]:
    def value(v):
        return None if pd.isna(v) else int(v)

    return [
        BeatFiducials(r=int(row.r), p=value(row.p), q=value(row.q), s=value(row.s), t=value(row.t))
        for row in frame.itertuples(index=False)
    ]


def run_features(config: PipelineConfig) -> dict:
    fiducial_frame = read_csv(Path(config.output_dir) / "detect" / "fiducials.csv", "detect", dtype={"record": str})
    out = stage_dir(config, "features")

    def extract(record):
        signal, cleaned = _denoised_record(config, record)
        fiducials = _fiducials_from_frame(fiducial_frame[fiducial_frame["record"] == record])
        annotations = wfdb_service.read_annotations(config.data_dir, record)
        return feature_service.build_record_rows(
            record, cleaned, fiducials, annotations, signal.fs, config.rr_reference, config.detection.match_tolerance
        )

    results = parallel_map(extract, config.records, config.threads)
    dataset = feature_service.dataset_frame([row for rows, _ in results for row in rows])
    drops = {record: report.model_dump() for record, (_, report) in zip(config.records, results)}

    split = wfdb_service.split_dataset(dataset, config.split_strategy, config.seed)
    train_rows = _select(dataset, split.train_beats)
    stats = feature_service.fit_normalization(train_rows, FeatureMode.TEN)

    write_csv(dataset, out / "dataset.csv")
    write_json(out / "normalization.json", stats.model_dump(mode="json"))
    write_json(out / "split.json", {
        "strategy": split.strategy.value,
        "seed": split.seed,
        "train": [list(k) for k in split.train_beats],
        "test": [list(k) for k in split.test_beats],
    })
    write_json(out / "drops.json", {
        "records": drops,
        "total": sum(sum(d.values()) for d in drops.values()),
        "class_counts": feature_service.class_counts(dataset),
    })
    write_config(out, config)
    logger.info(f"dataset: {len(dataset)} beats, {len(split.train_beats)} train / {len(split.test_beats)} test")
    return {"beats": len(dataset), "train": len(split.train_beats), "test": len(split.test_beats)}


def _select(dataset: pd.DataFrame, keys) -> pd.DataFrame:
    wanted = set((str(r), int(b)) for r, b in keys)
    mask = [(r, int(b)) in wanted for r, b in zip(dataset["record"], dataset["beat"])]
    return dataset[np.array(mask, dtype=bool)]


def load_splits(config: PipelineConfig, mode: FeatureMode):
    """Normalized (x_train, y_train, x_test, y_test) for one feature mode."""
    features_dir = Path(config.output_dir) / "features"
    dataset = read_csv(features_dir / "dataset.csv", "features", dtype={"record": str})
    stats = NormalizationStats.model_validate(read_json(features_dir / "normalization.json", "features"))
    split = read_json(features_dir / "split.json", "features")
    train_rows, test_rows = _select(dataset, split["train"]), _select(dataset, split["test"])
    return (
        feature_service.fuse_and_normalize(train_rows, stats, mode),
        feature_service.labels_of(train_rows),
        feature_service.fuse_and_normalize(test_rows, stats, mode),
        feature_service.labels_of(test_rows),
    )


# ---------------------------------------------------------------------------
# train / eval / quantize
# ---------------------------------------------------------------------------

def _model_config(config: PipelineConfig, name: str, mode: FeatureMode, dropout_rate: float | None = None) -> ModelConfig:
    rate = config.train.dropout_rate if dropout_rate is None else dropout_rate
    return build_config(name, rate, sequence_length=len(FeatureMode(mode).columns))


def train_model(config: PipelineConfig, name: str, mode: FeatureMode | None = None, dropout_rate: float | None = None,
                splits=None) -> tuple[ModelConfig, ModelParameters, Path]:
    mode = FeatureMode(mode or config.feature_mode)
    x_train, y_train, _, _ = splits or load_splits(config, mode)
    model_config = _model_config(config, name, mode, dropout_rate)
    params, history = train(model_config, x_train, y_train, config.train)

    key = model_key(name, mode)
    out = stage_dir(config, f"train/{key}")
    model_path = out / "model.bin"
    size = model_store.save_model(model_path, model_config, params)
    ceil_iters, floor_iters = iterations_per_epoch(len(y_train), config.train.batch_size)
    write_json(out / "metrics.json", {
        "model": name,
        "feature_mode": mode.value,
        "params": count_params(model_config),
        "flops": {c: count_flops(model_config, c) for c in ("weights_only_macs", "macs_per_step_x2")},
        "n_train": int(len(y_train)),
        "iterations_per_epoch": ceil_iters,
        "iterations_per_epoch_floor": floor_iters,
        "file_size_bytes": size,
        "epochs": [m.model_dump() for m in history],
        "train_spec": config.train.model_dump(mode="json"),
    })
    write_config(out, config)
    return model_config, params, model_path


def run_train(config: PipelineConfig) -> Path:
    _, _, path = train_model(config, config.preset)
    return path


def _trained_path(config: PipelineConfig, key: str) -> Path:
    return require_artifact(Path(config.output_dir) / "train" / key / "model.bin", "train")


def load_trained(config: PipelineConfig, name: str, mode: FeatureMode | None = None) -> tuple[ModelConfig, ModelParameters]:
    return model_store.load_model(_trained_path(config, model_key(name, mode or config.feature_mode)))


def run_quantize(config: PipelineConfig, schemes=None) -> dict:
    key = model_key(config.preset, config.feature_mode)
    model_config, params = load_trained(config, config.preset)
    x_train, _, _, _ = load_splits(config, config.feature_mode)
    calibration = quantize_service.calibration_sample(x_train, config.quantization.calib_size, config.seed)
    out = stage_dir(config, f"quantize/{key}")

    report = {}
    for scheme in schemes or config.quantization.schemes:
        scheme = QuantScheme(scheme)
        qmodel = quantize_service.quantize_model(
            model_config, params, scheme, calibration, granularity=config.quantization.drq_granularity
        )
        size = model_store.save_quantized(out / f"{scheme.value}.bin", qmodel)
        report[scheme.value] = {
            "file_size_bytes": size,
            "weights_only_bytes": quantize_service.model_size_bytes(qmodel, "weights_only"),
            "file_size": format_size(size),
        }
        logger.info(f"{key} {scheme.value}: {format_size(size)}")
    write_json(out / "quantize_report.json", report)
    write_config(out, config)
    return report


def run_eval(config: PipelineConfig, scheme: str = "fp32") -> dict:
    scheme = QuantScheme(scheme)
    key = model_key(config.preset, config.feature_mode)
    if scheme is QuantScheme.FP32:
        qmodel = model_store.load_quantized(_trained_path(config, key))
    else:
        path = Path(config.output_dir) / "quantize" / key / f"{scheme.value}.bin"
        qmodel = model_store.load_quantized(require_artifact(path, "quantize"))
    _, _, x_test, y_test = load_splits(config, config.feature_mode)

    cm, m = evaluate_service.evaluate_probabilities(quantize_service.quantized_infer(qmodel, x_test), y_test)
    report = evaluate_service.evaluation_report(qmodel.config, cm, m, scheme.value)
    out = stage_dir(config, f"eval/{key}")
    write_json(out / f"evaluation_{scheme.value}.json", report)
    confusion = pd.DataFrame(cm.to_list(), index=[c.name for c in HeartbeatClass], columns=[c.name for c in HeartbeatClass])
    write_csv(confusion.reset_index(names="true"), out / f"confusion_{scheme.value}.csv")
    write_config(out, config)
    logger.info(f"{key} {scheme.value}: accuracy {report['metrics']['accuracy']}%")
    return report


# ---------------------------------------------------------------------------
# benchmark / reproduce / ablation
# ---------------------------------------------------------------------------

def run_benchmark(config: PipelineConfig) -> list:
    models, missing = {}, None
    for preset in config.presets:
        path = Path(config.output_dir) / "train" / model_key(preset, config.feature_mode) / "model.bin"
        if path.exists():
            models[preset] = model_store.load_model(path)
        else:
            missing = missing or path
    if not models:
        raise MissingArtifactError(missing, "train")

    x_train, _, x_test, y_test = load_splits(config, config.feature_mode)
    calibration = quantize_service.calibration_sample(x_train, config.quantization.calib_size, config.seed)
    rows = evaluate_service.run_benchmark(
        models, config.presets, config.quantization.schemes, x_test, y_test, calibration, config.threads,
        drq_granularity=config.quantization.drq_granularity,
    )

    out = stage_dir(config, "benchmark")
    write_csv(evaluate_service.grid_frame(rows), out / "benchmark.csv")
    write_json(out / "benchmark.json", {
        "rows": [row.model_dump() for row in rows],
        "reference": {
            "results": evaluate_service.REFERENCE_RESULTS,
            "scheme_f1": evaluate_service.REFERENCE_SCHEME_F1,
        },
    })
    memory, accuracy = evaluate_service.plot_data(rows)
    write_csv(memory.reset_index(), out / "plot_memory.csv")
    write_csv(accuracy.reset_index(), out / "plot_accuracy.csv")
    write_config(out, config)
    return rows


def run_reproduce(config: PipelineConfig) -> list:
    run_ingest(config)
    run_detect(config)
    run_features(config)
    splits = load_splits(config, config.feature_mode)
    for preset in config.presets:
        train_model(config, preset, splits=splits)
    return run_benchmark(config)


FUSION_MODES = [FeatureMode.SIX, FeatureMode.SIX_PLUS_TWO, FeatureMode.TEN]
ABLATION_DROPOUT = 0.5


def run_ablation(config: PipelineConfig) -> dict:
    """Feature-fusion ablation on Bi-LSTM(64, 64) and the LSTM vs Bi-LSTM comparison on time features."""
    fusion = {}
    for mode in FUSION_MODES:
        splits = load_splits(config, mode)
        model_config, params, _ = train_model(config, "BILSTM64", mode, ABLATION_DROPOUT, splits=splits)
        _, m = evaluate_service.evaluate_probabilities(predict(model_config, params, splits[2]), splits[3])
        fusion[mode.value] = m

    architectures = {}
    splits = load_splits(config, FeatureMode.SIX)
    for name in ("LSTM64", "BILSTM32"):
        model_config, params, _ = train_model(config, name, FeatureMode.SIX, ABLATION_DROPOUT, splits=splits)
        _, m = evaluate_service.evaluate_probabilities(predict(model_config, params, splits[2]), splits[3])
        architectures[name] = (model_config, m)

    out = stage_dir(config, "ablation")
    fusion_table = evaluate_service.ablation_report(fusion)
    architecture_table = evaluate_service.architecture_report(architectures)
    write_csv(fusion_table, out / "fusion_ablation.csv")
    write_csv(architecture_table, out / "architecture.csv")
    reduction = evaluate_service.parameter_reduction(architectures["BILSTM32"][0], architectures["LSTM64"][0])
    summary = {
        "parameter_reduction": round(reduction, 4),
        "rbbb_recall_gain_ten_vs_six": round(100 * (fusion["ten"].recall[3] - fusion["six"].recall[3]), 2),
        "features": ALL_FEATURES,
    }
    write_json(out / "ablation.json", summary)
    write_config(out, config)
    return summary


def resolve_records(config: PipelineConfig, records) -> PipelineConfig:
    if not records:
        return config
    unknown = [r for r in records if not r.isdigit()]
    if unknown:
        raise ConfigError(f"record names are numeric, got {', '.join(unknown)}")
    return config.model_copy(update={"records": list(records)})


