import numpy as np
from pydantic import BaseModel, ConfigDict

from schemas.records import HeartbeatClass

CLASS_NAMES = [c.name for c in HeartbeatClass]


class ConfusionMatrix(BaseModel):
    """Counts with rows = true class, columns = predicted class."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_normalized(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape, dtype=float), where=rows > 0)

    def to_list(self) -> list[list[int]]:
        return self.counts.astype(int).tolist()


class ClassMetrics(BaseModel):
    model_config = ConfigDict(frozen=True)

    precision: list[float]
    recall: list[float]
    f1: list[float]
    accuracy: float
    precision_undefined: list[bool]
    recall_undefined: list[bool]
    f1_undefined: list[bool]


class BenchmarkRow(BaseModel):
    preset: str
    scheme: str
    accuracy: float
    f1_n: float
    f1_pb: float
    f1_lbbb: float
    f1_rbbb: float
    f1_pvc: float
    file_size_bytes: int
    weights_only_bytes: int
    reference_accuracy: float | None = None
    reference_memory_kb: float | None = None
