import numpy as np
import pandas as pd
from pydantic import ValidationError

from config import SAMPLING_RATE_HZ
from functionality.errors import ConfigError, FiducialOrderError, ZeroVarianceFeatureError
from functionality.logger import get_logger
from schemas.dataset import ALL_FEATURES, DropReport, FeatureMode, FeatureVector, NormalizationStats, RRReference
from schemas.records import AnnotationList, HeartbeatClass
from schemas.signals import BeatFiducials
from service.fiducial_service import match_events

logger = get_logger(__name__)

DATASET_COLUMNS = ["record", "beat"] + ALL_FEATURES + ["label"]
LINK_TOLERANCE = 54


def assemble_beats(fiducials: list[BeatFiducials], annotations: AnnotationList, tolerance: int = LINK_TOLERANCE):
    """Link every channel-0 selected-class annotation to its nearest detected R.

    Returns ([(fiducial position, class), ...] ordered by R, number of unlinked annotations).
    """
    beats = annotations.beats(channel=0)
    matches = match_events([b.r for b in fiducials], [a.sample_index for a in beats], tolerance)
    linked = [(k, beats[j].beat_class) for k, j in matches]
    return sorted(linked), len(beats) - len(linked)


def time_features(beat: BeatFiducials, neighbor: BeatFiducials, fs: float = SAMPLING_RATE_HZ,
                  rr_reference: RRReference = RRReference.R_TO_R) -> dict[str, float]:
    """Six intervals in seconds; ``neighbor`` is the adjacent beat used for t_rr."""
    if not beat.complete:
        raise FiducialOrderError(f"beat at R {beat.r} lacks a fiducial")
    if rr_reference is RRReference.T_TO_T:
        if neighbor.t is None:
            raise FiducialOrderError(f"neighbor of beat {beat.r} has no T peak")
        rr = abs(beat.t - neighbor.t)
    else:
        rr = abs(beat.r - neighbor.r)
    return {
        "t_rr": rr / fs,
        "t_pr": (beat.r - beat.p) / fs,
        "t_rt": (beat.t - beat.r) / fs,
        "t_qr": (beat.r - beat.q) / fs,
        "t_rs": (beat.s - beat.r) / fs,
        "t_pt": (beat.t - beat.p) / fs,
    }


def area_between(signal, i: int, j: int) -> float:
    """Sum of |x| from sample i to sample j, both ends included."""
    if i > j:
        raise FiducialOrderError(f"area bounds out of order: {i} > {j}")
    return float(np.abs(np.asarray(signal)[i:j + 1]).sum())


def area_features(signal, beat: BeatFiducials) -> dict[str, float]:
    if not beat.complete:
        raise FiducialOrderError(f"beat at R {beat.r} lacks a fiducial")
    if beat.t >= len(signal):
        raise FiducialOrderError(f"T {beat.t} beyond signal end {len(signal)}")
    return {
        "a_pq": area_between(signal, beat.p, beat.q),
        "a_st": area_between(signal, beat.s, beat.t),
        "a_qr": area_between(signal, beat.q, beat.r),
        "a_rs": area_between(signal, beat.r, beat.s),
    }


def _neighbor(fiducials: list[BeatFiducials], k: int, rr_reference: RRReference) -> BeatFiducials | None:
    for candidate in (k - 1, k + 1):
        if 0 <= candidate < len(fiducials):
            if rr_reference is RRReference.T_TO_T and fiducials[candidate].t is None:
                continue
            return fiducials[candidate]
    return None


def build_record_rows(record: str, denoised, fiducials: list[BeatFiducials], annotations: AnnotationList,
                      fs: float = SAMPLING_RATE_HZ, rr_reference: RRReference = RRReference.R_TO_R,
                      tolerance: int = LINK_TOLERANCE) -> tuple[list[dict], DropReport]:
    """Feature rows for every annotated beat that has a full set of fiducials."""
    linked, unlinked = assemble_beats(fiducials, annotations, tolerance)
    drops = {"unlinked": unlinked}
    rows = []
    for k, label in linked:
        beat = fiducials[k]
        missing = next((name for name in ("p", "q", "s", "t") if getattr(beat, name) is None), None)
        if missing:
            drops[f"missing_{missing}"] = drops.get(f"missing_{missing}", 0) + 1
            logger.debug(f"{record}: beat at {beat.r} has no {missing.upper()}, dropped")
            continue
        neighbor = _neighbor(fiducials, k, rr_reference)
        if neighbor is None:
            drops["missing_neighbor"] = drops.get("missing_neighbor", 0) + 1
            continue
        try:
            vector = FeatureVector(
                label=label, **time_features(beat, neighbor, fs, rr_reference), **area_features(denoised, beat)
            )
        except ValidationError as exc:
            raise FiducialOrderError(f"{record}: beat at {beat.r} gives invalid features: {exc.errors()[0]['msg']}")
        rows.append({"record": record, "beat": beat.r, **dict(zip(ALL_FEATURES, vector.values())), "label": int(label)})

    report = DropReport(**drops)
    logger.info(f"{record}: {len(rows)} beats kept, {report.total} dropped")
    return rows, report


def dataset_frame(rows: list[dict]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=DATASET_COLUMNS)
    frame["record"] = frame["record"].astype(str)
    frame["beat"] = frame["beat"].astype(np.int64)
    frame["label"] = frame["label"].astype(np.int64)
    return frame


def fit_normalization(train: pd.DataFrame, mode: FeatureMode = FeatureMode.TEN) -> NormalizationStats:
    """Per-feature mean and population standard deviation over the training rows."""
    columns = FeatureMode(mode).columns
    values = train[columns].to_numpy(dtype=np.float64)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    for name, sigma in zip(columns, std):
        if not sigma > 0:
            raise ZeroVarianceFeatureError(name)
    return NormalizationStats(features=columns, mean=mean.tolist(), std=std.tolist(), mode=mode)


def fuse_and_normalize(features: pd.DataFrame, stats: NormalizationStats,
                       mode: FeatureMode | None = None) -> np.ndarray:
    """z-score the selected features and stack them as (beats, sequence length) in fusion order."""
    mode = FeatureMode(mode or stats.mode)
    columns = mode.columns
    lookup = dict(zip(stats.features, zip(stats.mean, stats.std)))
    missing = [c for c in columns if c not in lookup]
    if missing:
        raise ConfigError(f"normalization stats lack features {missing}; rerun `features` with this mode")
    mean = np.array([lookup[c][0] for c in columns])
    std = np.array([lookup[c][1] for c in columns])
    for name, sigma in zip(columns, std):
        if not sigma > 0:
            raise ZeroVarianceFeatureError(name)
    return (features[columns].to_numpy(dtype=np.float64) - mean) / std


def labels_of(frame: pd.DataFrame) -> np.ndarray:
    return frame["label"].to_numpy(dtype=np.int64)


def class_counts(frame: pd.DataFrame) -> dict[str, int]:
    counts = frame["label"].value_counts()
    return {c.name: int(counts.get(int(c), 0)) for c in HeartbeatClass}
