"""Dense / LSTM / Bi-LSTM engine on numpy.

Activations are batch-first: sequences are (batch, steps, features). Every matrix product
against a stored weight goes through a ``matmul(x, weight_name)`` hook so that quantized
inference can swap in integer kernels without a second copy of the layer code.
"""
import math

import numpy as np

from functionality.errors import ConfigError, InvalidLabelError, NonFiniteActivationError, ShapeMismatchError
from schemas.network import (
    N_CLASSES,
    Activation,
    LayerKind,
    ModelConfig,
    ModelParameters,
    bilstm,
    dense,
    dropout,
    lstm,
)

FORGET_BIAS = 1.0
PROB_FLOOR = 1e-12

# (n1, n2, d) of Bi-LSTM(n1) -> Bi-LSTM(n2) -> Dropout -> Dense(d, relu) -> Dense(5, softmax)
PRESET_SIZES = {
    "T": (64, 32, 128),
    "S": (64, 64, 128),
    "M": (128, 112, 64),
    "L": (192, 176, 453),
}
DEFAULT_DROPOUT = 0.25


def bilstm_template(name: str, n1: int, n2: int, hidden: int, dropout_rate: float = DEFAULT_DROPOUT,
                    sequence_length: int = 10) -> ModelConfig:
    return ModelConfig(
        name=name,
        layers=[bilstm(n1), bilstm(n2), dropout(dropout_rate), dense(hidden), dense(N_CLASSES, Activation.SOFTMAX)],
        sequence_length=sequence_length,
    )


def preset_config(name: str, dropout_rate: float = DEFAULT_DROPOUT, sequence_length: int = 10) -> ModelConfig:
    if name not in PRESET_SIZES:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESET_SIZES)}")
    return bilstm_template(name, *PRESET_SIZES[name], dropout_rate=dropout_rate, sequence_length=sequence_length)


def reference_config(name: str, dropout_rate: float = DEFAULT_DROPOUT, sequence_length: int = 10) -> ModelConfig:
    """Architectures used by the LSTM vs Bi-LSTM comparison and the fusion ablation."""
    if name == "LSTM64":
        layers = [lstm(64), lstm(64), dropout(dropout_rate), dense(128), dense(N_CLASSES, Activation.SOFTMAX)]
        return ModelConfig(name=name, layers=layers, sequence_length=sequence_length)
    if name == "BILSTM32":
        return bilstm_template(name, 32, 32, 128, dropout_rate, sequence_length)
    if name == "BILSTM64":
        return bilstm_template(name, 64, 64, 128, dropout_rate, sequence_length)
    raise ConfigError(f"unknown reference architecture {name!r}")


def build_config(name: str, dropout_rate: float = DEFAULT_DROPOUT, sequence_length: int = 10) -> ModelConfig:
    if name in PRESET_SIZES:
        return preset_config(name, dropout_rate, sequence_length)
    return reference_config(name, dropout_rate, sequence_length)


# ---------------------------------------------------------------------------
# shapes and counting
# ---------------------------------------------------------------------------

def returns_sequences(config: ModelConfig, k: int) -> bool:
    """A recurrent layer emits every step when another recurrent layer follows it."""
    return any(spec.recurrent for spec in config.layers[k + 1:])


def _directions(kind: LayerKind) -> list[str]:
    return ["fwd.", "bwd."] if kind is LayerKind.BILSTM else [""]


def parameter_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Tensor name -> shape, in canonical file order."""
    shapes: dict[str, tuple[int, ...]] = {}
    width, is_sequence = config.input_width, True
    for k, spec in enumerate(config.layers):
        if spec.recurrent:
            if not is_sequence:
                raise ShapeMismatchError(f"layer {k}: recurrent layer needs a sequence input")
            units = spec.units
            for direction in _directions(spec.kind):
                shapes[f"{k}.{direction}W"] = (width, 4 * units)
                shapes[f"{k}.{direction}U"] = (units, 4 * units)
                shapes[f"{k}.{direction}b"] = (4 * units,)
            width = spec.output_width
            is_sequence = returns_sequences(config, k)
        elif spec.kind is LayerKind.DENSE:
            if is_sequence:
                width, is_sequence = width * config.sequence_length, False
            shapes[f"{k}.W"] = (width, spec.units)
            shapes[f"{k}.b"] = (spec.units,)
            width = spec.units
    return shapes


def count_params(config: ModelConfig) -> int:
    return int(sum(math.prod(shape) for shape in parameter_shapes(config).values()))


FLOP_CONVENTIONS = ("weights_only_macs", "macs_per_step_x2")


def count_flops(config: ModelConfig, convention: str = "weights_only_macs") -> int:
    """Two deterministic conventions.

    weights_only_macs: one multiply-accumulate per kernel weight (biases excluded).
    macs_per_step_x2: 2 FLOPs per MAC, recurrent kernels applied once per time step.
    """
    if convention not in FLOP_CONVENTIONS:
        raise ConfigError(f"unknown FLOP convention {convention!r}")
    total = 0
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".b"):
            continue
        macs = math.prod(shape)
        if convention == "macs_per_step_x2":
            k = int(name.split(".")[0])
            steps = config.sequence_length if config.layers[k].recurrent else 1
            macs = 2 * macs * steps
        total += macs
    return total


def init_params(config: ModelConfig, seed: int = 1) -> ModelParameters:
    """Fan-in uniform kernels, zero biases, forget-gate bias 1."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".b"):
            bias = np.zeros(shape, dtype=np.float64)
            if config.layers[int(name.split(".")[0])].recurrent:
                units = shape[0] // 4
                bias[units:2 * units] = FORGET_BIAS
            tensors[name] = bias
        else:
            limit = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-limit, limit, size=shape)
    return ModelParameters(tensors=tensors)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _gate_step(z, c_prev):
    units = c_prev.shape[-1]
    i = sigmoid(z[..., :units])
    f = sigmoid(z[..., units:2 * units])
    g = np.tanh(z[..., 2 * units:3 * units])
    o = sigmoid(z[..., 3 * units:])
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    return o * tanh_c, c, (i, f, g, o, tanh_c)


def lstm_cell_forward(x_t, h_prev, c_prev, weights: dict) -> tuple[np.ndarray, np.ndarray]:
    """One step: i, f, o sigmoid gates, g tanh candidate; ``weights`` holds W, U, b."""
    W, U, b = weights["W"], weights["U"], weights["b"]
    units = U.shape[0]
    if W.shape[1] != 4 * units or U.shape[1] != 4 * units or b.shape != (4 * units,):
        raise ShapeMismatchError(f"gate blocks inconsistent: W{W.shape} U{U.shape} b{b.shape}")
    if np.shape(x_t)[-1] != W.shape[0] or np.shape(h_prev)[-1] != units or np.shape(c_prev)[-1] != units:
        raise ShapeMismatchError(
            f"cell expects x width {W.shape[0]} and state width {units}, "
            f"got {np.shape(x_t)[-1]}, {np.shape(h_prev)[-1]}, {np.shape(c_prev)[-1]}"
        )
    h, c, _ = _gate_step(x_t @ W + h_prev @ U + b, c_prev)
    return h, c


def _default_matmul(params: ModelParameters):
    return lambda x, name: x @ params[name]


def lstm_layer_forward(x, params: ModelParameters, prefix: str, reverse: bool = False, matmul=None):
    """Run one direction over (B, T, F); returns all hidden states (B, T, H) and a cache."""
    matmul = matmul or _default_matmul(params)
    batch, steps, width = x.shape
    if steps == 0:
        raise ShapeMismatchError("empty sequence")
    W, U, b = params[f"{prefix}W"], params[f"{prefix}U"], params[f"{prefix}b"]
    if W.shape[0] != width:
        raise ShapeMismatchError(f"{prefix}W expects input width {W.shape[0]}, got {width}")
    units = U.shape[0]

    x_proj = matmul(x.reshape(batch * steps, width), f"{prefix}W").reshape(batch, steps, 4 * units) + b
    h = np.zeros((batch, units))
    c = np.zeros((batch, units))
    hs = np.zeros((batch, steps, units))
    cache = {"x": x, "reverse": reverse, "prefix": prefix, "steps": {}}
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        z = x_proj[:, t] + matmul(h, f"{prefix}U")
        h_new, c_new, gates = _gate_step(z, c)
        cache["steps"][t] = (h, c, gates)
        h, c = h_new, c_new
        hs[:, t] = h
    return hs, cache


def lstm_layer_backward(d_hs, cache, params: ModelParameters):
    """Backprop through time for one direction; ``d_hs`` is dL/dh at every position."""
    prefix, x = cache["prefix"], cache["x"]
    W, U = params[f"{prefix}W"], params[f"{prefix}U"]
    batch, steps, width = x.shape
    units = U.shape[0]

    dz_all = np.zeros((batch, steps, 4 * units))
    dU = np.zeros_like(U, dtype=np.float64)
    dh_next = np.zeros((batch, units))
    dc_next = np.zeros((batch, units))
    order = range(steps) if cache["reverse"] else range(steps - 1, -1, -1)
    for t in order:
        h_prev, c_prev, (i, f, g, o, tanh_c) = cache["steps"][t]
        dh = d_hs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tanh_c ** 2)
        dz = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dc * i * (1.0 - g ** 2),
            dh * tanh_c * o * (1.0 - o),
        ], axis=1)
        dz_all[:, t] = dz
        dU += h_prev.T @ dz
        dh_next = dz @ U.T
        dc_next = dc * f

    flat_dz = dz_all.reshape(batch * steps, 4 * units)
    grads = {
        f"{prefix}W": x.reshape(batch * steps, width).T @ flat_dz,
        f"{prefix}U": dU,
        f"{prefix}b": flat_dz.sum(axis=0),
    }
    dx = (flat_dz @ W.T).reshape(batch, steps, width)
    return dx, grads


def bilstm_layer_forward(x, params: ModelParameters, k: int, matmul=None):
    """Forward and backward directions concatenated per step, width 2*units."""
    fwd, fwd_cache = lstm_layer_forward(x, params, f"{k}.fwd.", reverse=False, matmul=matmul)
    bwd, bwd_cache = lstm_layer_forward(x, params, f"{k}.bwd.", reverse=True, matmul=matmul)
    return np.concatenate([fwd, bwd], axis=2), (fwd_cache, bwd_cache)


def bilstm_layer_backward(d_out, caches, params: ModelParameters):
    fwd_cache, bwd_cache = caches
    units = params[f"{fwd_cache['prefix']}U"].shape[0]
    dx_f, grads = lstm_layer_backward(d_out[:, :, :units], fwd_cache, params)
    dx_b, grads_b = lstm_layer_backward(d_out[:, :, units:], bwd_cache, params)
    grads.update(grads_b)
    return dx_f + dx_b, grads


def dense_forward(x, params: ModelParameters, k: int, activation: Activation, matmul=None):
    matmul = matmul or _default_matmul(params)
    z = matmul(x, f"{k}.W") + params[f"{k}.b"]
    if activation is Activation.RELU:
        y = np.maximum(z, 0.0)
    elif activation is Activation.TANH:
        y = np.tanh(z)
    elif activation is Activation.SOFTMAX:
        y = softmax(z)
    else:
        y = z
    return y, {"x": x, "y": y, "activation": activation}


def dense_backward(d_out, cache, params: ModelParameters, k: int, pre_activation: bool = False):
    """``pre_activation`` means ``d_out`` is already dL/dz (softmax fused with the loss)."""
    activation, y = cache["activation"], cache["y"]
    if pre_activation or activation is Activation.LINEAR:
        dz = d_out
    elif activation is Activation.RELU:
        dz = d_out * (y > 0)
    elif activation is Activation.TANH:
        dz = d_out * (1.0 - y ** 2)
    else:
        raise ShapeMismatchError("softmax gradient is only available fused with the loss")
    grads = {f"{k}.W": cache["x"].T @ dz, f"{k}.b": dz.sum(axis=0)}
    return dz @ params[f"{k}.W"].T, grads


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

def as_sequences(x, config: ModelConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
    if x.ndim != 3 or x.shape[1] != config.sequence_length or x.shape[2] != config.input_width:
        raise ShapeMismatchError(
            f"{config.name} expects input (batch, {config.sequence_length}, {config.input_width}), got {x.shape}"
        )
    return x


def _check_finite(values, k: int, kind: LayerKind):
    if not np.all(np.isfinite(values)):
        raise NonFiniteActivationError(f"layer {k} ({kind.value}) produced non-finite activations")


def forward_with_cache(config: ModelConfig, params: ModelParameters, x, train_mode: bool = False,
                       dropout_seed=None, matmul=None):
    h = as_sequences(x, config)
    rng = np.random.default_rng(dropout_seed) if train_mode else None
    caches = []
    for k, spec in enumerate(config.layers):
        if spec.recurrent:
            if spec.kind is LayerKind.BILSTM:
                seq, cache = bilstm_layer_forward(h, params, k, matmul)
            else:
                seq, cache = lstm_layer_forward(h, params, f"{k}.", matmul=matmul)
            if returns_sequences(config, k):
                h = seq
            elif spec.kind is LayerKind.BILSTM:
                # forward state after the last step, backward state after the first
                units = spec.units
                h = np.concatenate([seq[:, -1, :units], seq[:, 0, units:]], axis=1)
            else:
                h = seq[:, -1]
            caches.append((seq.shape, cache))
        elif spec.kind is LayerKind.DROPOUT:
            mask = None
            if train_mode and spec.dropout_rate > 0:
                mask = (rng.random(h.shape) >= spec.dropout_rate) / (1.0 - spec.dropout_rate)
                h = h * mask
            caches.append(mask)
        else:
            if h.ndim == 3:
                h = h.reshape(h.shape[0], -1)
            h, cache = dense_forward(h, params, k, spec.activation, matmul)
            caches.append(cache)
        _check_finite(h, k, spec.kind)
    return h, caches


def model_forward(config: ModelConfig, params: ModelParameters, x, train_mode: bool = False,
                  dropout_seed=None, matmul=None) -> np.ndarray:
    """Class probabilities, shape (batch, 5)."""
    probs, _ = forward_with_cache(config, params, x, train_mode, dropout_seed, matmul)
    return probs


def predict(config: ModelConfig, params: ModelParameters, x, batch_size: int = 1024, matmul=None) -> np.ndarray:
    x = as_sequences(x, config)
    chunks = [model_forward(config, params, x[i:i + batch_size], matmul=matmul) for i in range(0, len(x), batch_size)]
    return np.concatenate(chunks) if chunks else np.zeros((0, N_CLASSES))


def _check_labels(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= n_classes):
        raise InvalidLabelError(f"labels must be integers in 0..{n_classes - 1}")
    return labels.astype(np.int64)


def sparse_ce_loss(probs, labels, sample_weights=None) -> float:
    """Mean negative log-probability of the true class."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _check_labels(labels, probs.shape[1])
    nll = -np.log(np.maximum(probs[np.arange(labels.size), labels], PROB_FLOOR))
    if sample_weights is not None:
        nll = nll * sample_weights
    return float(nll.mean())


def model_backward(config: ModelConfig, params: ModelParameters, x, labels, train_mode: bool = True,
                   dropout_seed=None, class_weights=None, frozen_layers=()) -> tuple[float, dict, np.ndarray]:
    """Loss, gradient for every tensor, and the probabilities of this pass."""
    labels = _check_labels(labels, N_CLASSES)
    probs, caches = forward_with_cache(config, params, x, train_mode, dropout_seed)
    batch = labels.size
    sample_weights = None if class_weights is None else np.asarray(class_weights, dtype=np.float64)[labels]
    loss = sparse_ce_loss(probs, labels, sample_weights)

    d = probs.copy()
    d[np.arange(batch), labels] -= 1.0
    if sample_weights is not None:
        d *= sample_weights[:, None]
    d /= batch

    grads: dict[str, np.ndarray] = {}
    last = len(config.layers) - 1
    for k in range(last, -1, -1):
        spec, cache = config.layers[k], caches[k]
        if spec.kind is LayerKind.DENSE:
            d, layer_grads = dense_backward(d, cache, params, k, pre_activation=(k == last))
            grads.update(layer_grads)
            if k > 0 and d.ndim == 2 and _feeds_from_sequence(config, k):
                d = d.reshape(d.shape[0], config.sequence_length, -1)
        elif spec.kind is LayerKind.DROPOUT:
            if cache is not None:
                d = d * cache
        else:
            seq_shape, layer_cache = cache
            if returns_sequences(config, k):
                d_seq = d
            else:
                d_seq = np.zeros(seq_shape)
                if spec.kind is LayerKind.BILSTM:
                    units = spec.units
                    d_seq[:, -1, :units] = d[:, :units]
                    d_seq[:, 0, units:] = d[:, units:]
                else:
                    d_seq[:, -1] = d
            if spec.kind is LayerKind.BILSTM:
                d, layer_grads = bilstm_layer_backward(d_seq, layer_cache, params)
            else:
                d, layer_grads = lstm_layer_backward(d_seq, layer_cache, params)
            grads.update(layer_grads)

    frozen = set(frozen_layers)
    for name in grads:
        if int(name.split(".")[0]) in frozen:
            grads[name] = np.zeros_like(grads[name])
    return loss, grads, probs


def _feeds_from_sequence(config: ModelConfig, k: int) -> bool:
    """True when dense layer k flattened a sequence (no recurrent or dense layer before it)."""
    return not any(spec.recurrent or spec.kind is LayerKind.DENSE for spec in config.layers[:k])
