import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_KEEP = frozenset({"D4", "D5", "D6", "A9"})


class FilterBank(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lowpass_dec: np.ndarray
    highpass_dec: np.ndarray
    lowpass_rec: np.ndarray
    highpass_rec: np.ndarray

    def check_invariants(self, tol: float = 1e-10) -> None:
        """Raise ValueError unless the bank is an orthonormal quadrature-mirror pair."""
        lo, hi = self.lowpass_dec, self.highpass_dec
        if abs(lo.sum() - np.sqrt(2.0)) > tol:
            raise ValueError(f"lowpass sum {lo.sum()} != sqrt(2)")
        for name in ("lowpass_dec", "highpass_dec", "lowpass_rec", "highpass_rec"):
            energy = float(np.sum(getattr(self, name) ** 2))
            if abs(energy - 1.0) > tol:
                raise ValueError(f"{name} energy {energy} != 1")
        signs = (-1.0) ** (np.arange(lo.size) + 1)
        if not np.allclose(hi, signs * lo[::-1], atol=tol):
            raise ValueError("highpass is not the quadrature mirror of lowpass")
        if not (np.allclose(self.lowpass_rec, lo[::-1], atol=tol) and np.allclose(self.highpass_rec, hi[::-1], atol=tol)):
            raise ValueError("reconstruction filters are not time-reversed decomposition filters")


class WaveletCoeffs(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    details: list[np.ndarray]  # D1..Dn
    approximation: np.ndarray  # An
    pad_flags: list[bool]  # per level, True when that level's input was padded to even length

    @property
    def levels(self) -> int:
        return len(self.details)


class PseudoFrequencyRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    k_c: float = 0.7
    f_s: float = Field(360.0, gt=0)

    @field_validator("k_c")
    @classmethod
    def _central_frequency_in_unit_interval(cls, value):
        if not 0.0 < value < 1.0:
            raise ValueError("k_c must lie in (0, 1)")
        return value


class MovingAverageSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    half_width: int = Field(ge=1)
    centered: bool = True

    @classmethod
    def from_total_width(cls, total: int) -> "MovingAverageSpec":
        return cls(half_width=max(1, total // 2))


class BoiMask(BaseModel):
    model_config = ConfigDict(frozen=True)

    blocks: list[tuple[int, int]] = []  # [start, end) intervals


class BeatFiducials(BaseModel):
    model_config = ConfigDict(frozen=True)

    r: int
    p: int | None = None
    q: int | None = None
    s: int | None = None
    t: int | None = None

    @model_validator(mode="after")
    def _ordered(self):
        points = [v for v in (self.p, self.q, self.r, self.s, self.t) if v is not None]
        if any(b <= a for a, b in zip(points, points[1:])):
            raise ValueError(f"fiducials out of order: p={self.p} q={self.q} r={self.r} s={self.s} t={self.t}")
        return self

    @property
    def complete(self) -> bool:
        return None not in (self.p, self.q, self.s, self.t)


class DetectionScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    true_positives: int
    false_positives: int
    false_negatives: int
    sensitivity: float = Field(ge=0, le=1)
    precision: float = Field(ge=0, le=1)
    match_tolerance: int
    sensitivity_defined: bool = True
    precision_defined: bool = True
