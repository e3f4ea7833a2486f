import numpy as np

from functionality.errors import EmptyCalibrationError, QuantizationOverflowError, SchemeMismatchError
from functionality.logger import get_logger
from schemas.network import ModelConfig, ModelParameters
from schemas.quantization import Granularity, QuantizedModel, QuantParams, QuantScheme
from service.model_store import fp32_model, serialize_model
from service.network_service import as_sequences, model_forward, predict

logger = get_logger(__name__)

SCALE_FLOOR = 1e-8
WEIGHT_QMAX = 127
ACT_QMIN, ACT_QMAX = -128, 127
FP16_MAX = 65504.0


# ---------------------------------------------------------------------------
# quantizers
# ---------------------------------------------------------------------------

def quantize_tensor_symmetric(w, name: str = "tensor") -> tuple[np.ndarray, QuantParams]:
    """Per-tensor symmetric int8: scale = max|w| / 127, zero point 0, values in [-127, 127]."""
    w = np.asarray(w, dtype=np.float64)
    scale = float(np.max(np.abs(w))) / WEIGHT_QMAX if w.size else 0.0
    if scale < SCALE_FLOOR:
        logger.warning(f"{name}: zero range, scale floored to {SCALE_FLOOR}")
        scale = SCALE_FLOOR
    q = np.clip(np.round(w / scale), -WEIGHT_QMAX, WEIGHT_QMAX).astype(np.int8)
    return q, QuantParams(scale=scale, zero_point=0)


def dequantize(q, params: QuantParams) -> np.ndarray:
    return params.scale * (np.asarray(q, dtype=np.float64) - params.zero_point)


def affine_params(lo: float, hi: float) -> QuantParams:
    """Asymmetric int8 parameters for the range [lo, hi] widened to contain 0."""
    lo, hi = min(float(lo), 0.0), max(float(hi), 0.0)
    scale = max((hi - lo) / (ACT_QMAX - ACT_QMIN), SCALE_FLOOR)
    zero_point = int(np.clip(np.round(ACT_QMIN - lo / scale), ACT_QMIN, ACT_QMAX))
    return QuantParams(scale=scale, zero_point=zero_point)


def quantize_affine(x, params: QuantParams) -> np.ndarray:
    return np.clip(np.round(np.asarray(x) / params.scale) + params.zero_point, ACT_QMIN, ACT_QMAX)


def dynamic_affine(x: np.ndarray, granularity: Granularity = Granularity.PER_TENSOR):
    """On-the-fly affine quantization of a 2-D activation from its own min/max.

    Returns (q, zero point, scale); per-sample ranges come back as (B, 1) columns.
    """
    per_sample = Granularity(granularity) is Granularity.PER_SAMPLE
    axis = 1 if per_sample else None
    lo = np.minimum(x.min(axis=axis, keepdims=True), 0.0)
    hi = np.maximum(x.max(axis=axis, keepdims=True), 0.0)
    scale = np.maximum((hi - lo) / (ACT_QMAX - ACT_QMIN), SCALE_FLOOR)
    zero_point = np.clip(np.round(ACT_QMIN - lo / scale), ACT_QMIN, ACT_QMAX)
    q = np.clip(np.round(x / scale) + zero_point, ACT_QMIN, ACT_QMAX)
    return q, zero_point, scale


# ---------------------------------------------------------------------------
# schemes
# ---------------------------------------------------------------------------

def quantize_fp16(config: ModelConfig, params: ModelParameters) -> QuantizedModel:
    overflow = [name for name, t in params.tensors.items() if np.max(np.abs(t)) > FP16_MAX]
    if overflow:
        raise QuantizationOverflowError(overflow)
    return QuantizedModel(
        scheme=QuantScheme.FP16,
        config=config,
        tensors={name: np.asarray(t).astype(np.float16) for name, t in params.tensors.items()},
    )


def calibrate_activations(config: ModelConfig, params: ModelParameters, batches) -> dict[str, tuple[float, float]]:
    """Running min/max of the input to every weight product, widened to contain 0."""
    ranges: dict[str, list[float]] = {}

    def recording_matmul(x, name):
        lo, hi = float(x.min()), float(x.max())
        seen = ranges.setdefault(name, [0.0, 0.0])
        seen[0], seen[1] = min(seen[0], lo), max(seen[1], hi)
        return x @ params[name]

    n_samples = 0
    for batch in batches:
        batch = as_sequences(batch, config)
        if len(batch) == 0:
            continue
        model_forward(config, params, batch, matmul=recording_matmul)
        n_samples += len(batch)
    if n_samples == 0:
        raise EmptyCalibrationError("calibration needs at least one sample")
    logger.info(f"calibrated {len(ranges)} activation boundaries on {n_samples} samples")
    return {name: (lo, hi) for name, (lo, hi) in ranges.items()}


def _int8_weights(config: ModelConfig, params: ModelParameters, scheme: QuantScheme) -> QuantizedModel:
    tensors, weight_params = {}, {}
    for name, tensor in params.tensors.items():
        tensors[name], weight_params[name] = quantize_tensor_symmetric(tensor, name)
    return QuantizedModel(scheme=scheme, config=config, tensors=tensors, weight_params=weight_params)


def quantize_int8_full(config: ModelConfig, params: ModelParameters, calibration: dict[str, tuple[float, float]]) -> QuantizedModel:
    if not calibration:
        raise EmptyCalibrationError("full integer quantization needs calibrated activation ranges")
    qmodel = _int8_weights(config, params, QuantScheme.INT8_FULL)
    qmodel.activation_params = {name: affine_params(lo, hi) for name, (lo, hi) in calibration.items()}
    return qmodel


def quantize_drq(config: ModelConfig, params: ModelParameters,
                 granularity: Granularity = Granularity.PER_TENSOR) -> QuantizedModel:
    qmodel = _int8_weights(config, params, QuantScheme.DRQ)
    qmodel.activation_granularity = Granularity(granularity)
    return qmodel


def quantize_model(config: ModelConfig, params: ModelParameters, scheme: QuantScheme, calibration_data=None,
                   calib_batch: int = 256, granularity: Granularity = Granularity.PER_TENSOR) -> QuantizedModel:
    scheme = QuantScheme(scheme)
    if scheme is QuantScheme.FP32:
        return fp32_model(config, params)
    if scheme is QuantScheme.FP16:
        return quantize_fp16(config, params)
    if scheme is QuantScheme.DRQ:
        return quantize_drq(config, params, granularity)
    if calibration_data is None:
        raise EmptyCalibrationError("int8 quantization needs calibration data")
    batches = [calibration_data[i:i + calib_batch] for i in range(0, len(calibration_data), calib_batch)]
    return quantize_int8_full(config, params, calibrate_activations(config, params, batches))


def calibration_sample(x_train, size: int, seed: int) -> np.ndarray:
    """Seeded draw of ``size`` training beats without replacement."""
    rng = np.random.default_rng(seed)
    size = min(size, len(x_train))
    return np.asarray(x_train)[np.sort(rng.choice(len(x_train), size=size, replace=False))]


# ---------------------------------------------------------------------------
# inference
# ---------------------------------------------------------------------------

def dequantize_model(qmodel: QuantizedModel) -> ModelParameters:
    if qmodel.scheme in (QuantScheme.FP32, QuantScheme.FP16):
        return ModelParameters(tensors={k: np.asarray(v, dtype=np.float32) for k, v in qmodel.tensors.items()})
    return ModelParameters(tensors={k: dequantize(v, qmodel.weight_params[k]) for k, v in qmodel.tensors.items()})


def make_integer_matmul(qmodel: QuantizedModel):
    """Matrix product on int8 operands with exact integer accumulation.

    Operands are integer-valued float64 arrays; every partial sum stays far below 2**53, so
    the BLAS product equals the 32-bit integer accumulation bit for bit.
    """
    static = qmodel.scheme is QuantScheme.INT8_FULL

    def integer_matmul(x, name):
        q_w = qmodel.tensors[name].astype(np.float64)
        w_scale = qmodel.weight_params[name].scale
        if static:
            act = qmodel.activation_params[name]
            q_x = quantize_affine(x, act) - act.zero_point
            return (q_x @ q_w) * (act.scale * w_scale)
        q_x, zero_point, x_scale = dynamic_affine(x, qmodel.activation_granularity)
        return ((q_x - zero_point) @ q_w) * (x_scale * w_scale)

    return integer_matmul


def check_scheme(qmodel: QuantizedModel, expected_config: ModelConfig | None = None):
    if expected_config is not None and expected_config != qmodel.config:
        raise SchemeMismatchError(f"model file holds {qmodel.config.name}, expected {expected_config.name}")
    if qmodel.scheme in (QuantScheme.INT8_FULL, QuantScheme.DRQ):
        missing = [name for name in qmodel.tensors if name not in qmodel.weight_params]
        if missing:
            raise SchemeMismatchError(f"{qmodel.scheme.value} model lacks weight scales for {', '.join(missing)}")
    if qmodel.scheme is QuantScheme.INT8_FULL:
        products = [name for name in qmodel.tensors if not name.endswith(".b")]
        missing = [name for name in products if name not in qmodel.activation_params]
        if missing:
            raise SchemeMismatchError(f"int8 model lacks activation ranges for {', '.join(missing)}")


def quantized_infer(qmodel: QuantizedModel, x, expected_config: ModelConfig | None = None,
                    batch_size: int = 1024) -> np.ndarray:
    """Class probabilities under the model's scheme; cell state stays in float32 precision or better."""
    check_scheme(qmodel, expected_config)
    params = dequantize_model(qmodel)
    if qmodel.scheme is QuantScheme.FP32:
        return model_forward(qmodel.config, params, x)
    if qmodel.scheme is QuantScheme.FP16:
        return predict(qmodel.config, params, x, batch_size)
    return predict(qmodel.config, params, x, batch_size, matmul=make_integer_matmul(qmodel))


# ---------------------------------------------------------------------------
# size accounting
# ---------------------------------------------------------------------------

SIZE_CONVENTIONS = ("weights_only", "file_size")


def model_size_bytes(qmodel: QuantizedModel, convention: str = "file_size") -> int:
    if convention == "weights_only":
        return qmodel.param_count() * qmodel.scheme.bytes_per_weight
    if convention == "file_size":
        return len(serialize_model(qmodel))
    raise ValueError(f"unknown size convention {convention!r}")
