from pydantic import BaseModel, Field

from config import DEFAULT_SEED, DEFAULT_THREADS, ECG_DATA_DIR, ECG_RESULTS_DIR, MITBIH_RECORDS
from schemas.dataset import FeatureMode, RRReference
from schemas.network import TrainSpec
from schemas.quantization import Granularity, QuantScheme
from schemas.records import SplitStrategy


class DetectionSettings(BaseModel):
    r_peak_window: int = Field(36, ge=2)
    r_wave_window: int = Field(120, ge=2)
    threshold_factor: float = Field(0.3, ge=0)
    threshold_percentile: float = Field(95.0, gt=0, le=100)
    min_block_width: int = Field(14, ge=1)
    square_envelope: bool = True
    qrs_pre: int = Field(30, ge=0)
    qrs_post: int = Field(60, ge=0)
    pt_peak_window: int = Field(20, ge=2)
    pt_wave_window: int = Field(40, ge=2)
    p_min_distance: int = 20
    p_max_distance: int = 170
    t_min_distance: int = 40
    t_max_distance: int = 210
    q_window: int = Field(20, ge=1)
    s_window: int = Field(40, ge=1)
    match_tolerance: int = Field(54, ge=0)


class QuantizationSettings(BaseModel):
    calib_size: int = Field(512, ge=1)
    schemes: list[QuantScheme] = list(QuantScheme)
    drq_granularity: Granularity = Granularity.PER_TENSOR


class PipelineConfig(BaseModel):
    data_dir: str = ECG_DATA_DIR
    output_dir: str = ECG_RESULTS_DIR
    seed: int = DEFAULT_SEED
    threads: int = Field(DEFAULT_THREADS, ge=1)
    records: list[str] = list(MITBIH_RECORDS)
    lead_index: int = Field(0, ge=0)
    split_strategy: SplitStrategy = SplitStrategy.STRATIFIED_BEAT
    feature_mode: FeatureMode = FeatureMode.TEN
    rr_reference: RRReference = RRReference.R_TO_R
    preset: str = "T"
    presets: list[str] = ["T", "S", "M", "L"]
    detection: DetectionSettings = DetectionSettings()
    train: TrainSpec = TrainSpec()
    quantization: QuantizationSettings = QuantizationSettings()
