from enum import Enum, IntEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field


class HeartbeatClass(IntEnum):
    """The five selected beat classes; the integer value is the training label."""
    N = 0
    PB = 1
    LBBB = 2
    RBBB = 3
    PVC = 4


# MIT annotation code -> selected class
BEAT_CODE_CLASSES = {
    1: HeartbeatClass.N,
    2: HeartbeatClass.LBBB,
    3: HeartbeatClass.RBBB,
    5: HeartbeatClass.PVC,
    12: HeartbeatClass.PB,
}

# MIT annotation code -> display symbol (WFDB annot.c table)
ANNOTATION_SYMBOLS = {
    0: " ", 1: "N", 2: "L", 3: "R", 4: "a", 5: "V", 6: "F", 7: "J", 8: "A", 9: "S",
    10: "E", 11: "j", 12: "/", 13: "Q", 14: "~", 16: "|", 18: "s", 19: "T", 20: "*",
    21: "D", 22: '"', 23: "=", 24: "p", 25: "B", 26: "^", 27: "t", 28: "+", 29: "u",
    30: "?", 31: "!", 32: "[", 33: "]", 34: "e", 35: "n", 36: "@", 37: "x", 38: "f",
    39: "(", 40: ")", 41: "r",
}

BEAT_CODES = frozenset({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 25, 30, 34, 35, 38, 41})
PWAVE_CODE = 24


class SignalSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    file_name: str
    storage_format: int
    adc_gain: float = Field(gt=0)
    adc_baseline: int
    initial_value: int
    description: str = ""


class RecordHeader(BaseModel):
    model_config = ConfigDict(frozen=True)

    record_name: str
    n_signals: int = Field(ge=1)
    sampling_rate_hz: float = Field(gt=0)
    n_samples: int = Field(ge=0)
    signals: list[SignalSpec]


class SignalRecord(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    header: RecordHeader
    samples: np.ndarray
    lead_index: int = 0

    @property
    def fs(self) -> float:
        return self.header.sampling_rate_hz

    @property
    def name(self) -> str:
        return self.header.record_name


class AnnotationEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_index: int = Field(ge=0)
    symbol_code: int = Field(ge=0, le=63)
    beat_class: HeartbeatClass | None = None
    channel: int = 0
    num: int = 0
    subtype: int = 0
    aux: str = ""

    @property
    def symbol(self) -> str:
        return ANNOTATION_SYMBOLS.get(self.symbol_code, f"[{self.symbol_code}]")


class AnnotationList(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: list[AnnotationEntry] = []

    def __len__(self):
        return len(self.entries)

    def beats(self, channel: int = 0, selected_only: bool = True) -> list[AnnotationEntry]:
        """Beat annotations on one channel, optionally restricted to the five selected classes."""
        return [
            e for e in self.entries
            if e.channel == channel and e.symbol_code in BEAT_CODES
            and (e.beat_class is not None or not selected_only)
        ]

    def sample_indices(self, code: int | None = None) -> np.ndarray:
        return np.array(
            [e.sample_index for e in self.entries if code is None or e.symbol_code == code], dtype=np.int64
        )


class SplitStrategy(str, Enum):
    STRATIFIED_BEAT = "stratified-beat"
    BY_RECORD = "by-record"


class DatasetSplit(BaseModel):
    model_config = ConfigDict(frozen=True)

    train_beats: list[tuple[str, int]]
    test_beats: list[tuple[str, int]]
    strategy: SplitStrategy
    seed: int
