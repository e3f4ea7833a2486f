from enum import Enum

from pydantic import BaseModel, ConfigDict, Field

from schemas.records import HeartbeatClass

TIME_FEATURES = ["t_rr", "t_pr", "t_rt", "t_qr", "t_rs", "t_pt"]
AREA_FEATURES = ["a_pq", "a_st", "a_qr", "a_rs"]
ALL_FEATURES = TIME_FEATURES + AREA_FEATURES


class FeatureMode(str, Enum):
    TEN = "ten"
    SIX = "six"
    SIX_PLUS_TWO = "six+2"

    @property
    def columns(self) -> list[str]:
        if self is FeatureMode.SIX:
            return list(TIME_FEATURES)
        if self is FeatureMode.SIX_PLUS_TWO:
            return TIME_FEATURES + ["a_qr", "a_rs"]
        return list(ALL_FEATURES)


class RRReference(str, Enum):
    R_TO_R = "r"
    T_TO_T = "t"


class FeatureVector(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_rr: float = Field(gt=0)
    t_pr: float = Field(gt=0)
    t_rt: float = Field(gt=0)
    t_qr: float = Field(gt=0)
    t_rs: float = Field(gt=0)
    t_pt: float = Field(gt=0)
    a_pq: float = Field(ge=0)
    a_st: float = Field(ge=0)
    a_qr: float = Field(ge=0)
    a_rs: float = Field(ge=0)
    label: HeartbeatClass

    def values(self) -> list[float]:
        return [getattr(self, name) for name in ALL_FEATURES]


class NormalizationStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    features: list[str]
    mean: list[float]
    std: list[float]
    mode: FeatureMode = FeatureMode.TEN


class DropReport(BaseModel):
    """Per-reason counts of annotated beats that did not make it into the dataset."""
    unlinked: int = 0
    missing_p: int = 0
    missing_q: int = 0
    missing_s: int = 0
    missing_t: int = 0
    missing_neighbor: int = 0

    @property
    def total(self) -> int:
        return self.unlinked + self.missing_p + self.missing_q + self.missing_s + self.missing_t + self.missing_neighbor

    def merged(self, other: "DropReport") -> "DropReport":
        return DropReport(**{k: getattr(self, k) + getattr(other, k) for k in DropReport.model_fields})
