import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

from functionality.errors import InvalidLabelError, LengthMismatchError
from functionality.logger import get_logger
from schemas.evaluation import CLASS_NAMES, BenchmarkRow, ClassMetrics, ConfusionMatrix
from schemas.network import N_CLASSES, ModelConfig, ModelParameters
from schemas.quantization import Granularity, QuantScheme
from service.network_service import count_flops, count_params
from service.quantize_service import model_size_bytes, quantize_model, quantized_infer
from service.utils import format_size, parallel_map, round_half_up

logger = get_logger(__name__)

# Published results kept beside measured values. Percentages; memory in kB (1024 base).
REFERENCE_RESULTS = {
    "T": {"accuracy": 94.7, "f1": [96.9, 96.6, 88.8, 85.1, 89.1], "params": 83973, "flops": 71584},
    "S": {"accuracy": 95.1, "f1": [97.2, 97.2, 89.4, 87.2, 89.0], "params": 149765, "flops": 121472},
    "M": {"accuracy": 95.5, "f1": [97.1, 97.6, 91.4, 84.8, 89.6], "params": 478469, "flops": 351872},
    "L": {"accuracy": 96.1, "f1": [97.6, 98.0, 90.8, 89.1, 90.4], "params": 1250053, "flops": 996992},
}

# F1 per class (N, PB, LBBB, RBBB, PVC) under each scheme
REFERENCE_SCHEME_F1 = {
    "T": {"fp32": [96.8, 96.9, 88.9, 80.4, 89.4], "fp16": [89.3, 83.8, 66.1, 27.3, 76.1],
          "drq": [96.8, 96.9, 88.9, 80.5, 89.4], "int8": [86.9, 73.2, 50.2, 12.7, 74.9]},
    "S": {"fp32": [97.4, 97.6, 91.9, 88.5, 90.4], "fp16": [95.1, 94.4, 84.6, 75.3, 85.5],
          "drq": [97.4, 97.5, 91.9, 88.5, 90.4], "int8": [89.5, 87.6, 62.2, 27.0, 74.6]},
    "M": {"fp32": [97.8, 98.0, 93.1, 90.3, 90.8], "fp16": [97.5, 97.4, 91.6, 87.8, 90.8],
          "drq": [97.8, 98.0, 93.1, 90.3, 90.9], "int8": [86.4, 61.6, 48.6, 36.4, 69.5]},
    "L": {"fp32": [97.7, 98.0, 92.8, 90.0, 91.3], "fp16": [97.6, 97.6, 92.2, 88.3, 91.1],
          "drq": [97.8, 98.0, 92.6, 89.6, 91.3], "int8": [92.6, 91.3, 77.2, 51.5, 83.4]},
}

REFERENCE_SCHEME_ACCURACY = {
    ("T", "fp32"): 94.7, ("S", "fp32"): 95.1, ("M", "fp32"): 95.5, ("L", "fp32"): 96.1,
    ("T", "drq"): 94.6, ("L", "drq"): 96.4, ("L", "int8"): 88.4,
}

REFERENCE_MEMORY_KB = {
    ("T", "fp32"): 328.0, ("S", "fp32"): 585.0, ("M", "fp32"): 1.83 * 1024, ("L", "fp32"): 4.77 * 1024,
    ("T", "fp16"): 203.0, ("S", "fp16"): 331.0, ("M", "fp16"): 991.0, ("L", "fp16"): 2481.0,
    ("T", "int8"): 159.0, ("S", "int8"): 229.0, ("M", "int8"): 601.0, ("L", "int8"): 1352.0,
    ("T", "drq"): 139.0, ("L", "drq"): 1.33 * 1024,
}

# per-class recall under each fused feature set, Bi-LSTM(64, 64) with dropout 0.5
REFERENCE_FUSION_RECALL = {
    "six": {"RBBB": 31.40, "LBBB": 69.58},
    "six+2": {"RBBB": 68.27, "LBBB": 86.01},
    "ten": {"RBBB": 84.30},
}

# RBBB recall / F1 for the six-time-feature LSTM vs Bi-LSTM comparison
REFERENCE_ARCHITECTURE_RBBB = {
    "LSTM64": {"recall": 21.81, "f1": 38.37},
    "BILSTM32": {"recall": 33.79, "f1": 43.09},
}


def confusion(predictions, labels) -> ConfusionMatrix:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.shape != labels.shape:
        raise LengthMismatchError(f"{predictions.size} predictions for {labels.size} labels")
    for name, values in (("labels", labels), ("predictions", predictions)):
        if values.size and (values.min() < 0 or values.max() >= N_CLASSES):
            raise InvalidLabelError(f"{name} must lie in 0..{N_CLASSES - 1}")
    if labels.size == 0:
        return ConfusionMatrix(counts=np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))
    counts = confusion_matrix(labels, predictions, labels=list(range(N_CLASSES)))
    return ConfusionMatrix(counts=counts.astype(np.int64))


def metrics(cm: ConfusionMatrix) -> ClassMetrics:
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)

    precision = np.divide(tp, predicted, out=np.zeros(N_CLASSES), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros(N_CLASSES), where=actual > 0)
    denominator = precision + recall
    f1 = np.divide(2 * precision * recall, denominator, out=np.zeros(N_CLASSES), where=denominator > 0)
    total = counts.sum()
    return ClassMetrics(
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        accuracy=float(tp.sum() / total) if total > 0 else 0.0,
        precision_undefined=(predicted == 0).tolist(),
        recall_undefined=(actual == 0).tolist(),
        f1_undefined=(denominator == 0).tolist(),
    )


def percent_table(m: ClassMetrics) -> dict:
    """Percentages rounded half-up to one decimal, keyed by class name."""
    def pct(values):
        return {name: round_half_up(100 * v) for name, v in zip(CLASS_NAMES, values)}

    return {
        "accuracy": round_half_up(100 * m.accuracy),
        "precision": pct(m.precision),
        "recall": pct(m.recall),
        "f1": pct(m.f1),
        "undefined": {
            "precision": [n for n, flag in zip(CLASS_NAMES, m.precision_undefined) if flag],
            "recall": [n for n, flag in zip(CLASS_NAMES, m.recall_undefined) if flag],
            "f1": [n for n, flag in zip(CLASS_NAMES, m.f1_undefined) if flag],
        },
    }


def evaluate_probabilities(probs, labels) -> tuple[ConfusionMatrix, ClassMetrics]:
    cm = confusion(np.asarray(probs).argmax(axis=1), labels)
    return cm, metrics(cm)


def evaluation_report(config: ModelConfig, cm: ConfusionMatrix, m: ClassMetrics, scheme: str = "fp32") -> dict:
    report = {
        "model": config.name,
        "scheme": scheme,
        "params": count_params(config),
        "flops": {c: count_flops(config, c) for c in ("weights_only_macs", "macs_per_step_x2")},
        "confusion_matrix": cm.to_list(),
        "row_normalized": np.round(cm.row_normalized(), 6).tolist(),
        "metrics": percent_table(m),
    }
    reference = REFERENCE_RESULTS.get(config.name)
    if reference:
        report["reference"] = reference
    return report


# ---------------------------------------------------------------------------
# benchmark grid
# ---------------------------------------------------------------------------

def _benchmark_cell(job) -> BenchmarkRow:
    preset, scheme, config, params, x_test, y_test, calibration, granularity = job
    qmodel = quantize_model(config, params, scheme, calibration, granularity=granularity)
    _, m = evaluate_probabilities(quantized_infer(qmodel, x_test), y_test)
    f1 = [round_half_up(100 * v) for v in m.f1]
    return BenchmarkRow(
        preset=preset,
        scheme=scheme.value,
        accuracy=round_half_up(100 * m.accuracy),
        f1_n=f1[0], f1_pb=f1[1], f1_lbbb=f1[2], f1_rbbb=f1[3], f1_pvc=f1[4],
        file_size_bytes=model_size_bytes(qmodel, "file_size"),
        weights_only_bytes=model_size_bytes(qmodel, "weights_only"),
        reference_accuracy=REFERENCE_SCHEME_ACCURACY.get((preset, scheme.value)),
        reference_memory_kb=REFERENCE_MEMORY_KB.get((preset, scheme.value)),
    )


def run_benchmark(models: dict[str, tuple[ModelConfig, ModelParameters]], presets, schemes, x_test, y_test,
                  calibration_data=None, threads: int = 1,
                  drq_granularity: Granularity = Granularity.PER_TENSOR) -> list[BenchmarkRow]:
    """Every preset under every scheme on one test split; missing presets are skipped."""
    jobs = []
    for preset in presets:
        if preset not in models:
            logger.warning(f"preset {preset} has no trained model; skipped in the benchmark grid")
            continue
        config, params = models[preset]
        for scheme in schemes:
            jobs.append(
                (preset, QuantScheme(scheme), config, params, x_test, y_test, calibration_data, drq_granularity)
            )
    rows = parallel_map(_benchmark_cell, jobs, threads)
    for row in rows:
        logger.info(f"{row.preset}/{row.scheme}: accuracy {row.accuracy}%, file {format_size(row.file_size_bytes)}")
    return rows


def grid_frame(rows: list[BenchmarkRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows], columns=list(BenchmarkRow.model_fields))


def plot_data(rows: list[BenchmarkRow]) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Memory (kB, file size) and accuracy (%) as preset x scheme tables."""
    frame = grid_frame(rows)
    frame["memory_kb"] = (frame["file_size_bytes"] / 1024).round(2)
    order = [s.value for s in QuantScheme if s.value in set(frame["scheme"])]
    memory = frame.pivot(index="preset", columns="scheme", values="memory_kb").reindex(columns=order)
    accuracy = frame.pivot(index="preset", columns="scheme", values="accuracy").reindex(columns=order)
    presets = list(dict.fromkeys(frame["preset"]))
    return memory.reindex(presets), accuracy.reindex(presets)


# ---------------------------------------------------------------------------
# ablations
# ---------------------------------------------------------------------------

def ablation_report(results: dict[str, ClassMetrics]) -> pd.DataFrame:
    """Per-class recall and F1 for each fused feature set, with the published recalls."""
    rows = []
    for mode, m in results.items():
        table = percent_table(m)
        for name in CLASS_NAMES:
            rows.append({
                "mode": mode,
                "class": name,
                "recall": table["recall"][name],
                "f1": table["f1"][name],
                "reference_recall": REFERENCE_FUSION_RECALL.get(mode, {}).get(name),
            })
    return pd.DataFrame(rows, columns=["mode", "class", "recall", "f1", "reference_recall"])


def parameter_reduction(smaller: ModelConfig, larger: ModelConfig) -> float:
    return 1.0 - count_params(smaller) / count_params(larger)


def architecture_report(results: dict[str, tuple[ModelConfig, ClassMetrics]]) -> pd.DataFrame:
    rows = []
    for name, (config, m) in results.items():
        table = percent_table(m)
        row = {"model": name, "params": count_params(config), "accuracy": table["accuracy"]}
        for cls in CLASS_NAMES:
            row[f"recall_{cls}"] = table["recall"][cls]
            row[f"f1_{cls}"] = table["f1"][cls]
        reference = REFERENCE_ARCHITECTURE_RBBB.get(name, {})
        row["reference_recall_RBBB"] = reference.get("recall")
        row["reference_f1_RBBB"] = reference.get("f1")
        rows.append(row)
    return pd.DataFrame(rows)
