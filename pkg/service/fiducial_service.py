import numpy as np

from config import SAMPLING_RATE_HZ
from functionality.logger import get_logger
from schemas.pipeline import DetectionSettings
from schemas.signals import BeatFiducials, BoiMask, DetectionScore, MovingAverageSpec

logger = get_logger(__name__)

# sample-count settings that scale with the sampling rate
_WINDOW_FIELDS = (
    "r_peak_window", "r_wave_window", "min_block_width", "qrs_pre", "qrs_post",
    "pt_peak_window", "pt_wave_window", "p_min_distance", "p_max_distance",
    "t_min_distance", "t_max_distance", "q_window", "s_window", "match_tolerance",
)


def settings_for_rate(settings: DetectionSettings, fs: float) -> DetectionSettings:
    """Rescale the sample-count windows (given at 360 Hz) to another sampling rate."""
    if fs == SAMPLING_RATE_HZ:
        return settings
    factor = fs / SAMPLING_RATE_HZ
    return settings.model_copy(
        update={name: max(1, int(round(getattr(settings, name) * factor))) for name in _WINDOW_FIELDS}
    )


def moving_average(signal, spec: MovingAverageSpec) -> np.ndarray:
    """Centered mean over 2*half_width+1 samples; edges average the samples that exist."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    h = spec.half_width
    kernel = np.ones(2 * h + 1)
    sums = np.convolve(x, kernel)[h:h + x.size]
    counts = np.convolve(np.ones(x.size), kernel)[h:h + x.size]
    return sums / counts


def find_blocks(mask, min_width: int = 1) -> BoiMask:
    """Maximal runs of True as [start, end) intervals, dropping runs narrower than ``min_width``."""
    mask = np.asarray(mask, dtype=bool)
    edges = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return BoiMask(blocks=[(int(s), int(e)) for s, e in zip(starts, ends) if e - s >= min_width])


def _envelope(x: np.ndarray, settings: DetectionSettings) -> np.ndarray:
    return x * x if settings.square_envelope else np.abs(x)


def detect_r_peaks(signal, settings: DetectionSettings = DetectionSettings()) -> tuple[np.ndarray, BoiMask]:
    """R peaks from the blocks where the short moving average of the energy envelope
    exceeds the long one and clears the amplitude gate."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        return np.zeros(0, dtype=np.int64), BoiMask()

    envelope = _envelope(x, settings)
    y_peak = moving_average(envelope, MovingAverageSpec.from_total_width(settings.r_peak_window))
    y_wave = moving_average(envelope, MovingAverageSpec.from_total_width(settings.r_wave_window))
    gate = y_peak > settings.threshold_factor * np.percentile(y_peak, settings.threshold_percentile)

    boi = find_blocks((y_peak > y_wave) & gate, settings.min_block_width)
    peaks = np.array([start + int(np.argmax(x[start:end])) for start, end in boi.blocks], dtype=np.int64)
    if peaks.size == 0:
        logger.warning("no blocks of interest found; signal may be flat")
    return peaks, boi


def suppress_qrs(signal, r_indices, pre: int = 30, post: int = 60) -> np.ndarray:
    """Copy of ``signal`` with [r - pre, r + post] zeroed around every R."""
    out = np.array(signal, dtype=np.float64, copy=True)
    n = out.size
    for r in np.asarray(r_indices, dtype=np.int64):
        out[max(0, r - pre):min(n, r + post + 1)] = 0.0
    return out


def _assign_p_t(suppressed, r_indices, settings: DetectionSettings) -> tuple[dict[int, int], dict[int, int]]:
    """Map R position -> P index (P precedes that R) and R position -> T index (T follows it)."""
    x = np.asarray(suppressed, dtype=np.float64)
    r = np.asarray(r_indices, dtype=np.int64)
    if x.size == 0 or r.size == 0:
        return {}, {}

    envelope = _envelope(x, settings)
    y_peak = moving_average(envelope, MovingAverageSpec.from_total_width(settings.pt_peak_window))
    y_wave = moving_average(envelope, MovingAverageSpec.from_total_width(settings.pt_wave_window))
    blocks = find_blocks((y_peak > y_wave) & (y_peak > 0)).blocks

    p_mid = (settings.p_min_distance + settings.p_max_distance) / 2
    t_mid = (settings.t_min_distance + settings.t_max_distance) / 2
    best_p: dict[int, tuple[float, int]] = {}
    best_t: dict[int, tuple[float, int]] = {}
    for start, end in blocks:
        candidate = start + int(np.argmax(np.abs(x[start:end])))
        amplitude = abs(x[candidate])

        following = int(np.searchsorted(r, candidate, side="right"))
        preceding = int(np.searchsorted(r, candidate, side="left")) - 1
        d_p = int(r[following]) - candidate if following < r.size else None
        d_t = candidate - int(r[preceding]) if preceding >= 0 else None
        is_p = d_p is not None and settings.p_min_distance <= d_p <= settings.p_max_distance
        is_t = d_t is not None and settings.t_min_distance <= d_t <= settings.t_max_distance
        if is_p and is_t:
            # both ranges admit it: nearer interval midpoint decides, P on a tie
            is_t = abs(d_t - t_mid) < abs(d_p - p_mid)
            is_p = not is_t

        if is_p and amplitude > best_p.get(following, (-1.0, 0))[0]:
            best_p[following] = (amplitude, candidate)
        elif is_t and amplitude > best_t.get(preceding, (-1.0, 0))[0]:
            best_t[preceding] = (amplitude, candidate)

    return {j: c for j, (_, c) in best_p.items()}, {j: c for j, (_, c) in best_t.items()}


def detect_p_t_peaks(suppressed, r_indices, settings: DetectionSettings = DetectionSettings()) -> tuple[np.ndarray, np.ndarray]:
    p_map, t_map = _assign_p_t(suppressed, r_indices, settings)
    return (
        np.array(sorted(p_map.values()), dtype=np.int64),
        np.array(sorted(t_map.values()), dtype=np.int64),
    )


def detect_q_s_dips(signal, r_indices, q_window: int = 20, s_window: int = 40) -> tuple[list, list]:
    """Q = argmin over [r - q_window, r), S = argmin over (r, r + s_window]; None when the window is empty."""
    x = np.asarray(signal, dtype=np.float64)
    n = x.size
    qs, ss = [], []
    for r in np.asarray(r_indices, dtype=np.int64):
        r = int(r)
        lo = max(0, r - q_window)
        qs.append(lo + int(np.argmin(x[lo:r])) if lo < r else None)
        hi = min(n, r + s_window + 1)
        ss.append(r + 1 + int(np.argmin(x[r + 1:hi])) if r + 1 < hi else None)
    return qs, ss


def detect_fiducials(denoised, fs: float = SAMPLING_RATE_HZ, settings: DetectionSettings = DetectionSettings()) -> list[BeatFiducials]:
    settings = settings_for_rate(settings, fs)
    x = np.asarray(denoised, dtype=np.float64)
    r_peaks, _ = detect_r_peaks(x, settings)
    suppressed = suppress_qrs(x, r_peaks, settings.qrs_pre, settings.qrs_post)
    p_map, t_map = _assign_p_t(suppressed, r_peaks, settings)
    qs, ss = detect_q_s_dips(x, r_peaks, settings.q_window, settings.s_window)

    beats = []
    for j, r in enumerate(r_peaks):
        p, t, q, s = p_map.get(j), t_map.get(j), qs[j], ss[j]
        if p is not None and q is not None and p >= q:
            logger.debug(f"R {r}: P {p} not before Q {q}, dropped")
            p = None
        if t is not None and s is not None and t <= s:
            logger.debug(f"R {r}: T {t} not after S {s}, dropped")
            t = None
        beats.append(BeatFiducials(r=int(r), p=p, q=q, s=s, t=t))
    return beats


def match_events(predicted, truth, tolerance: int) -> list[tuple[int, int]]:
    """Greedy one-to-one matching, closest pairs first.

    Returns (predicted position, truth position) pairs into the given sequences.
    """
    pred = np.asarray(predicted, dtype=np.int64)
    ref = np.asarray(truth, dtype=np.int64)
    order = np.argsort(ref, kind="stable")
    ref_sorted = ref[order]

    pairs = []
    for i, value in enumerate(pred):
        lo = np.searchsorted(ref_sorted, value - tolerance, side="left")
        hi = np.searchsorted(ref_sorted, value + tolerance, side="right")
        for k in range(lo, hi):
            j = int(order[k])
            pairs.append((abs(int(ref[j]) - int(value)), i, j))
    pairs.sort()

    used_pred, used_ref, matches = set(), set(), []
    for _, i, j in pairs:
        if i in used_pred or j in used_ref:
            continue
        used_pred.add(i)
        used_ref.add(j)
        matches.append((i, j))
    return sorted(matches)


def score_detection(predicted, truth, match_tolerance: int = 54) -> DetectionScore:
    tp = len(match_events(predicted, truth, match_tolerance))
    fp = len(predicted) - tp
    fn = len(truth) - tp
    sensitivity_defined = tp + fn > 0
    precision_defined = tp + fp > 0
    return DetectionScore(
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        sensitivity=tp / (tp + fn) if sensitivity_defined else 0.0,
        precision=tp / (tp + fp) if precision_defined else 0.0,
        match_tolerance=match_tolerance,
        sensitivity_defined=sensitivity_defined,
        precision_defined=precision_defined,
    )


def aggregate_scores(scores: list[DetectionScore], match_tolerance: int = 54) -> DetectionScore:
    """Pool TP/FP/FN over records before taking the ratios."""
    tp = sum(s.true_positives for s in scores)
    fp = sum(s.false_positives for s in scores)
    fn = sum(s.false_negatives for s in scores)
    return DetectionScore(
        true_positives=tp,
        false_positives=fp,
        false_negatives=fn,
        sensitivity=tp / (tp + fn) if tp + fn else 0.0,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        match_tolerance=match_tolerance,
        sensitivity_defined=tp + fn > 0,
        precision_defined=tp + fp > 0,
    )
