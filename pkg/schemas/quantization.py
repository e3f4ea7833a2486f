from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from schemas.network import ModelConfig


class QuantScheme(str, Enum):
    FP32 = "fp32"
    FP16 = "fp16"
    INT8_FULL = "int8"
    DRQ = "drq"

    @property
    def bytes_per_weight(self) -> int:
        return {"fp32": 4, "fp16": 2, "int8": 1, "drq": 1}[self.value]


class Granularity(str, Enum):
    """Span one dynamic activation scale covers: the whole tensor, or each sample (row) of it."""
    PER_TENSOR = "per-tensor"
    PER_SAMPLE = "per-sample"


class QuantParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    scale: float = Field(gt=0)
    zero_point: int = 0
    granularity: Granularity = Granularity.PER_TENSOR


class QuantizedModel(BaseModel):
    """Weights stored under one scheme.

    ``tensors`` keeps the stored representation (float32, float16 or int8), ``weight_params``
    the per-tensor scale for integer schemes, ``activation_params`` the calibrated input
    range of every matrix product for full integer quantization, keyed by the weight name
    the activation multiplies. DRQ models carry ``activation_granularity`` instead: one
    range per activation tensor, or one per sample so results never depend on the batch.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    scheme: QuantScheme
    config: ModelConfig
    tensors: dict[str, np.ndarray]
    weight_params: dict[str, QuantParams] = {}
    activation_params: dict[str, QuantParams] = {}
    # DRQ only: how activation ranges are taken at inference
    activation_granularity: Granularity = Granularity.PER_TENSOR

    def param_count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))
