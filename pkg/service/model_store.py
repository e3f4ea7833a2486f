"""Model files.

Layout: magic ``ECGBLSTM`` | u16 version | u32 descriptor length | descriptor JSON | tensor blocks.
The descriptor carries the ModelConfig, the scheme tag and one entry per tensor (name, shape,
dtype, scale, zero point) in canonical order; blocks follow in the same order, little-endian.
"""
import json
import struct
from pathlib import Path

import numpy as np

from functionality.errors import ModelFormatError, SchemeMismatchError
from schemas.network import ModelConfig, ModelParameters
from schemas.quantization import Granularity, QuantizedModel, QuantParams, QuantScheme
from service.network_service import parameter_shapes

MAGIC = b"ECGBLSTM"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sHI")

STORAGE_DTYPES = {
    QuantScheme.FP32: np.dtype("<f4"),
    QuantScheme.FP16: np.dtype("<f2"),
    QuantScheme.INT8_FULL: np.dtype("i1"),
    QuantScheme.DRQ: np.dtype("i1"),
}


def serialize_model(qmodel: QuantizedModel) -> bytes:
    dtype = STORAGE_DTYPES[qmodel.scheme]
    shapes = parameter_shapes(qmodel.config)
    entries, blocks = [], []
    for name, shape in shapes.items():
        tensor = qmodel.tensors[name]
        if tuple(tensor.shape) != shape:
            raise ModelFormatError(f"tensor {name} has shape {tensor.shape}, config expects {shape}")
        params = qmodel.weight_params.get(name)
        entries.append({
            "name": name,
            "shape": list(shape),
            "dtype": dtype.str,
            "scale": params.scale if params else None,
            "zero_point": params.zero_point if params else None,
        })
        blocks.append(np.ascontiguousarray(tensor, dtype=dtype).tobytes())
    descriptor = {
        "config": qmodel.config.model_dump(mode="json"),
        "scheme": qmodel.scheme.value,
        "tensors": entries,
        "activations": {
            name: {"scale": p.scale, "zero_point": p.zero_point}
            for name, p in sorted(qmodel.activation_params.items())
        },
    }
    if qmodel.scheme is QuantScheme.DRQ:
        descriptor["activation_granularity"] = qmodel.activation_granularity.value
    header = json.dumps(descriptor, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)) + header + b"".join(blocks)


def deserialize_model(raw: bytes) -> QuantizedModel:
    if len(raw) < _PREAMBLE.size:
        raise ModelFormatError("file too short for a model header")
    magic, version, header_length = _PREAMBLE.unpack_from(raw)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}; not a model file")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    start = _PREAMBLE.size
    if len(raw) < start + header_length:
        raise ModelFormatError("file truncated inside the descriptor")
    try:
        descriptor = json.loads(raw[start:start + header_length].decode("utf-8"))
        config = ModelConfig.model_validate(descriptor["config"])
        scheme = QuantScheme(descriptor["scheme"])
        granularity = Granularity(descriptor.get("activation_granularity", Granularity.PER_TENSOR.value))
        entries = [
            (entry["name"], tuple(entry["shape"]), np.dtype(entry["dtype"]), entry.get("scale"), entry.get("zero_point"))
            for entry in descriptor["tensors"]
        ]
        activations = {
            name: QuantParams(scale=p["scale"], zero_point=p["zero_point"])
            for name, p in descriptor.get("activations", {}).items()
        }
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"unreadable model descriptor: {exc}")

    expected = parameter_shapes(config)
    offset = start + header_length
    tensors, weight_params = {}, {}
    for name, shape, dtype, scale, zero_point in entries:
        if dtype != STORAGE_DTYPES[scheme]:
            raise ModelFormatError(
                f"tensor {name} stored as {dtype.str}, a {scheme.value} file stores {STORAGE_DTYPES[scheme].str}"
            )
        if expected.get(name) != shape:
            raise ModelFormatError(f"tensor {name} shape {shape} does not match the stored config")
        n_bytes = int(np.prod(shape)) * dtype.itemsize
        if offset + n_bytes > len(raw):
            raise ModelFormatError(
                f"file truncated: block {name} needs {n_bytes} bytes, {max(len(raw) - offset, 0)} remain"
            )
        tensors[name] = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape)), offset=offset).reshape(shape).copy()
        offset += n_bytes
        if scale is not None:
            weight_params[name] = QuantParams(scale=scale, zero_point=zero_point or 0)
    missing = [name for name in expected if name not in tensors]
    if missing:
        raise ModelFormatError(f"file lacks tensor blocks: {', '.join(missing)}")

    return QuantizedModel(
        scheme=scheme, config=config, tensors=tensors, weight_params=weight_params, activation_params=activations,
        activation_granularity=granularity,
    )


def fp32_model(config: ModelConfig, params: ModelParameters) -> QuantizedModel:
    return QuantizedModel(
        scheme=QuantScheme.FP32,
        config=config,
        tensors={k: np.asarray(v, dtype=np.float32) for k, v in params.tensors.items()},
    )


def save_quantized(path, qmodel: QuantizedModel) -> int:
    data = serialize_model(qmodel)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)
    return len(data)


def save_model(path, config: ModelConfig, params: ModelParameters) -> int:
    return save_quantized(path, fp32_model(config, params))


def load_quantized(path) -> QuantizedModel:
    return deserialize_model(Path(path).read_bytes())


def load_model(path) -> tuple[ModelConfig, ModelParameters]:
    qmodel = load_quantized(path)
    if qmodel.scheme is not QuantScheme.FP32:
        raise SchemeMismatchError(f"{path} holds a {qmodel.scheme.value} model; expected fp32")
    return qmodel.config, ModelParameters(tensors=qmodel.tensors)


def header_size(qmodel: QuantizedModel) -> int:
    data = serialize_model(qmodel)
    return len(data) - sum(t.size * STORAGE_DTYPES[qmodel.scheme].itemsize for t in qmodel.tensors.values())
