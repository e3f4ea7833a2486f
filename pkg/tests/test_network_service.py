import math

import numpy as np
import pytest

from functionality.errors import ConfigError, InvalidLabelError, NonFiniteActivationError, ShapeMismatchError
from schemas.network import Activation, ModelConfig, ModelParameters, bilstm, dense
from service.network_service import (
    PRESET_SIZES,
    bilstm_layer_forward,
    build_config,
    count_flops,
    count_params,
    init_params,
    lstm_cell_forward,
    lstm_layer_forward,
    model_backward,
    model_forward,
    parameter_shapes,
    predict,
    sparse_ce_loss,
)
from service.utils import format_size


@pytest.mark.parametrize("name, expected", [("T", 83973), ("S", 149765), ("M", 478469),
                                            ("LSTM64", 58885), ("BILSTM32", 42501)])
def test_parameter_counts(name, expected):
    assert count_params(build_config(name)) == expected


def test_large_preset_close_to_published_count():
    assert abs(count_params(build_config("L")) - 1250053) / 1250053 < 1e-3


def test_bilstm_saves_parameters_over_lstm():
    reduction = 1 - count_params(build_config("BILSTM32")) / count_params(build_config("LSTM64"))
    assert round(reduction, 2) == 0.28


@pytest.mark.parametrize("name, shown", [("T", "328.00 kB"), ("S", "585.00 kB"), ("M", "1.83 MB"), ("L", "4.77 MB")])
def test_weights_only_fp32_sizes(name, shown):
    assert format_size(4 * count_params(build_config(name))) == shown


def test_flop_conventions():
    config = build_config("T")
    assert count_flops(config, "weights_only_macs") == 83072
    assert count_flops(config, "macs_per_step_x2") > 2 * count_flops(config, "weights_only_macs")
    with pytest.raises(ConfigError):
        count_flops(config, "per-cycle")


def test_canonical_names_and_shapes():
    shapes = parameter_shapes(build_config("T"))
    assert list(shapes)[:3] == ["0.fwd.W", "0.fwd.U", "0.fwd.b"]
    assert shapes["0.fwd.W"] == (1, 256)
    assert shapes["1.bwd.U"] == (32, 128)
    assert shapes["3.W"] == (64, 128)
    assert shapes["4.W"] == (128, 5)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        build_config("XL")
    assert set(PRESET_SIZES) == {"T", "S", "M", "L"}


def test_init_is_seeded_with_forget_bias():
    config = build_config("T")
    first, second = init_params(config, 3), init_params(config, 3)
    for name in first.tensors:
        np.testing.assert_array_equal(first[name], second[name])
    np.testing.assert_array_equal(first["0.fwd.b"][64:128], 1.0)
    assert np.all(first["0.fwd.b"][:64] == 0.0)


def test_forward_outputs_probabilities(toy_configs):
    rng = np.random.default_rng(0)
    for config in toy_configs.values():
        params = init_params(config, 1)
        probs = model_forward(config, params, rng.normal(size=(7, 4)))
        assert probs.shape == (7, 5)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0)


def test_predict_matches_single_pass(toy_configs):
    config = toy_configs["bilstm"]
    params = init_params(config, 2)
    x = np.random.default_rng(1).normal(size=(25, 4))
    np.testing.assert_allclose(predict(config, params, x, batch_size=4), model_forward(config, params, x))


def test_wrong_sequence_length(toy_configs):
    config = toy_configs["lstm"]
    with pytest.raises(ShapeMismatchError):
        model_forward(config, init_params(config), np.zeros((2, 5)))


def test_cell_rejects_inconsistent_blocks():
    weights = {"W": np.zeros((2, 12)), "U": np.zeros((3, 12)), "b": np.zeros(12)}
    h, c = lstm_cell_forward(np.zeros((1, 2)), np.zeros((1, 3)), np.zeros((1, 3)), weights)
    assert h.shape == c.shape == (1, 3)
    with pytest.raises(ShapeMismatchError):
        lstm_cell_forward(np.zeros((1, 2)), np.zeros((1, 3)), np.zeros((1, 3)), dict(weights, b=np.zeros(8)))
    with pytest.raises(ShapeMismatchError):
        lstm_cell_forward(np.zeros((1, 4)), np.zeros((1, 3)), np.zeros((1, 3)), weights)


def test_cell_matches_gate_equations():
    rng = np.random.default_rng(4)
    W, U, b = rng.normal(size=(2, 8)), rng.normal(size=(2, 8)), rng.normal(size=8)
    x, h0, c0 = rng.normal(size=(1, 2)), rng.normal(size=(1, 2)), rng.normal(size=(1, 2))
    z = x @ W + h0 @ U + b
    sig = lambda v: 1 / (1 + np.exp(-v))
    i, f, g, o = sig(z[:, :2]), sig(z[:, 2:4]), np.tanh(z[:, 4:6]), sig(z[:, 6:])
    c = f * c0 + i * g
    h, c_out = lstm_cell_forward(x, h0, c0, {"W": W, "U": U, "b": b})
    np.testing.assert_allclose(c_out, c)
    np.testing.assert_allclose(h, o * np.tanh(c))


def test_reverse_direction_equals_forward_on_flipped_input():
    rng = np.random.default_rng(6)
    params = ModelParameters(tensors={"W": rng.normal(size=(3, 8)), "U": rng.normal(size=(2, 8)),
                                      "b": rng.normal(size=8)})
    x = rng.normal(size=(4, 5, 3))
    backward, _ = lstm_layer_forward(x, params, "", reverse=True)
    forward_flipped, _ = lstm_layer_forward(x[:, ::-1], params, "")
    np.testing.assert_allclose(backward, forward_flipped[:, ::-1])


def test_uniform_predictor_loss_is_log_five():
    probs = np.full((13, 5), 0.2)
    labels = np.arange(13) % 5
    assert abs(sparse_ce_loss(probs, labels) - math.log(5)) <= 1e-9
    with pytest.raises(InvalidLabelError):
        sparse_ce_loss(probs, np.full(13, 5))


def _numeric_gradient(config, params, x, labels, name, index, eps=1e-5):
    original = params[name][index]
    params[name][index] = original + eps
    plus, _, _ = model_backward(config, params, x, labels, dropout_seed=9)
    params[name][index] = original - eps
    minus, _, _ = model_backward(config, params, x, labels, dropout_seed=9)
    params[name][index] = original
    return (plus - minus) / (2 * eps)


@pytest.mark.parametrize("kind", ["bilstm", "lstm", "dense"])
def test_gradients_match_finite_differences(toy_configs, kind):
    config = toy_configs[kind]
    params = init_params(config, 5)
    rng = np.random.default_rng(8)
    x = rng.normal(size=(6, 4))
    labels = np.array([0, 1, 2, 3, 4, 1])
    _, grads, _ = model_backward(config, params, x, labels, dropout_seed=9)
    assert set(grads) == set(params.tensors)

    for name, tensor in params.tensors.items():
        flat = rng.choice(tensor.size, size=min(5, tensor.size), replace=False)
        for position in flat:
            index = np.unravel_index(position, tensor.shape)
            numeric = _numeric_gradient(config, params, x, labels, name, index)
            analytic = grads[name][index]
            assert abs(analytic - numeric) <= 1e-4 * max(abs(analytic), abs(numeric)) + 1e-8, (name, index)


def test_class_weights_scale_the_loss(toy_configs):
    config = toy_configs["dense"]
    params = init_params(config, 1)
    x = np.random.default_rng(3).normal(size=(5, 4))
    labels = np.zeros(5, dtype=np.int64)
    plain, _, _ = model_backward(config, params, x, labels, train_mode=False)
    weighted, _, _ = model_backward(config, params, x, labels, train_mode=False,
                                    class_weights=[2.0, 1.0, 1.0, 1.0, 1.0])
    assert weighted == pytest.approx(2 * plain)


def test_frozen_layers_get_zero_gradients(toy_configs):
    config = toy_configs["lstm"]
    params = init_params(config, 1)
    x = np.random.default_rng(3).normal(size=(5, 4))
    _, grads, _ = model_backward(config, params, x, np.arange(5), frozen_layers=[0])
    assert all(not np.any(grads[n]) for n in grads if n.startswith("0."))
    assert np.any(grads["1.W"])


def test_non_finite_activation_is_reported(toy_configs):
    config = toy_configs["dense"]
    params = init_params(config, 3)
    beats = np.ones((2, 4))
    with pytest.raises(NonFiniteActivationError, match="layer 0"):
        model_forward(config, params, np.where(np.arange(4) == 1, np.nan, beats))

    weights = params.clone()
    weights.tensors["0.W"][0, 0] = np.inf
    weights.tensors["0.W"][1, 0] = -np.inf  # inf - inf on positive inputs
    with pytest.raises(NonFiniteActivationError):
        model_forward(config, weights, beats)


def test_eval_mode_ignores_the_dropout_seed(toy_configs):
    config = toy_configs["bilstm"]
    params = init_params(config, 5)
    x = np.random.default_rng(6).normal(size=(3, 4))
    np.testing.assert_array_equal(
        model_forward(config, params, x, dropout_seed=1), model_forward(config, params, x, dropout_seed=2)
    )
    assert not np.array_equal(
        model_forward(config, params, x, train_mode=True, dropout_seed=1),
        model_forward(config, params, x, train_mode=True, dropout_seed=2),
    )


def test_zero_dropout_training_pass_equals_inference():
    config = build_config("T", dropout_rate=0.0, sequence_length=4)
    params = init_params(config, 2)
    x = np.random.default_rng(7).normal(size=(5, 4))
    np.testing.assert_array_equal(
        model_forward(config, params, x, train_mode=True, dropout_seed=3), model_forward(config, params, x)
    )


def test_mirrored_bilstm_on_a_palindrome():
    config = ModelConfig(name="mirror", sequence_length=5, layers=[bilstm(3), dense(5, Activation.SOFTMAX)])
    params = init_params(config, 8)
    for name in ("W", "U", "b"):
        params.tensors[f"0.bwd.{name}"] = params.tensors[f"0.fwd.{name}"].copy()
    x = np.random.default_rng(9).normal(size=(4, 3))
    palindrome = np.concatenate([x, x[:, 1::-1]], axis=1)[:, :, None]
    seq, _ = bilstm_layer_forward(palindrome, params, 0)
    np.testing.assert_allclose(seq[:, :, :3], seq[:, ::-1, 3:], atol=1e-12)
