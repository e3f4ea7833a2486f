from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

N_CLASSES = 5


class LayerKind(str, Enum):
    LSTM = "lstm"
    BILSTM = "bilstm"
    DROPOUT = "dropout"
    DENSE = "dense"


class Activation(str, Enum):
    TANH = "tanh"
    RELU = "relu"
    SOFTMAX = "softmax"
    LINEAR = "linear"


class LayerSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: LayerKind
    units: int | None = Field(None, ge=1)
    dropout_rate: float = Field(0.0, ge=0.0, lt=1.0)
    activation: Activation = Activation.TANH

    @property
    def recurrent(self) -> bool:
        return self.kind in (LayerKind.LSTM, LayerKind.BILSTM)

    @property
    def output_width(self) -> int | None:
        if self.kind is LayerKind.BILSTM:
            return 2 * self.units
        return self.units


def lstm(units: int) -> LayerSpec:
    return LayerSpec(kind=LayerKind.LSTM, units=units)


def bilstm(units: int) -> LayerSpec:
    return LayerSpec(kind=LayerKind.BILSTM, units=units)


def dropout(rate: float) -> LayerSpec:
    return LayerSpec(kind=LayerKind.DROPOUT, dropout_rate=rate)


def dense(units: int, activation: Activation = Activation.RELU) -> LayerSpec:
    return LayerSpec(kind=LayerKind.DENSE, units=units, activation=activation)


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    layers: list[LayerSpec]
    sequence_length: int = Field(10, ge=1)
    input_width: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _well_formed(self):
        for spec in self.layers:
            if spec.kind is not LayerKind.DROPOUT and spec.units is None:
                raise ValueError(f"{spec.kind.value} layer needs units")
        last = self.layers[-1] if self.layers else None
        if last is None or last.kind is not LayerKind.DENSE or last.activation is not Activation.SOFTMAX:
            raise ValueError("final layer must be a softmax dense layer")
        if last.units != N_CLASSES:
            raise ValueError(f"final layer must output {N_CLASSES} classes")
        return self

    def with_sequence_length(self, length: int) -> "ModelConfig":
        return self.model_copy(update={"sequence_length": length})


class ModelParameters(BaseModel):
    """Named weight tensors in canonical order.

    Per layer index k: recurrent layers hold ``k.W`` (input kernel), ``k.U`` (recurrent kernel)
    and ``k.b`` with gates concatenated as i, f, g, o; bidirectional layers prefix those with
    ``fwd``/``bwd`` (forward direction first). Dense layers hold ``k.W`` and ``k.b``.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    tensors: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def clone(self) -> "ModelParameters":
        return ModelParameters(tensors={k: v.copy() for k, v in self.tensors.items()})


class OptimizerKind(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


class TrainSpec(BaseModel):
    batch_size: int = Field(64, ge=1)
    epochs: int = Field(10, ge=1)
    optimizer: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = Field(1e-3, gt=0)
    seed: int = 1
    dropout_rate: float = Field(0.25, ge=0.0, lt=1.0)
    class_weighting: bool = False
    frozen_layers: list[int] = []


class EpochMetrics(BaseModel):
    epoch: int
    loss: float
    accuracy: float
    iterations: int
