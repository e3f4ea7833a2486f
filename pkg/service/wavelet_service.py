import re

import numpy as np
import pywt

from functionality.errors import InvalidLevelError, SignalTooShortError
from schemas.signals import DEFAULT_KEEP, FilterBank, PseudoFrequencyRule, WaveletCoeffs

DEFAULT_LEVELS = 9

_LABEL = re.compile(r"^([DA])(\d+)$")


def make_db4_filters() -> FilterBank:
    """8-tap Daubechies wavelet with four vanishing moments, from the PyWavelets table."""
    wavelet = pywt.Wavelet("db4")
    bank = FilterBank(
        lowpass_dec=np.asarray(wavelet.dec_lo, dtype=np.float64),
        highpass_dec=np.asarray(wavelet.dec_hi, dtype=np.float64),
        lowpass_rec=np.asarray(wavelet.rec_lo, dtype=np.float64),
        highpass_rec=np.asarray(wavelet.rec_hi, dtype=np.float64),
    )
    bank.check_invariants()
    return bank


def _as_pywt(filters: FilterBank) -> pywt.Wavelet:
    return pywt.Wavelet(
        "ecg-bank",
        filter_bank=(
            filters.lowpass_dec.tolist(),
            filters.highpass_dec.tolist(),
            filters.lowpass_rec.tolist(),
            filters.highpass_rec.tolist(),
        ),
    )


def pseudo_frequency(level: int, rule: PseudoFrequencyRule = PseudoFrequencyRule()) -> float:
    """Centre frequency of decomposition level ``level``: k_c * f_s / 2**level."""
    if level < 1:
        raise InvalidLevelError(f"decomposition level must be >= 1, got {level}")
    return rule.k_c * rule.f_s / 2 ** level


def levels_for_cutoff(cutoff_hz: float, rule: PseudoFrequencyRule = PseudoFrequencyRule()) -> int:
    """Smallest level whose pseudo-frequency is at or below ``cutoff_hz``."""
    level = 1
    while pseudo_frequency(level, rule) > cutoff_hz:
        level += 1
    return level


def dwt_decompose(signal, filters: FilterBank, levels: int = DEFAULT_LEVELS) -> WaveletCoeffs:
    x = np.asarray(signal, dtype=np.float64)
    if levels < 1:
        raise InvalidLevelError(f"decomposition depth must be >= 1, got {levels}")
    if x.size < 2 ** levels:
        raise SignalTooShortError(f"{levels}-level decomposition needs at least {2 ** levels} samples, got {x.size}")

    wavelet = _as_pywt(filters)
    details, pad_flags = [], []
    approx = x
    for _ in range(levels):
        padded = approx.size % 2 == 1
        if padded:
            approx = np.append(approx, approx[-1])
        approx, detail = pywt.dwt(approx, wavelet, mode="periodization")
        details.append(detail)
        pad_flags.append(padded)
    return WaveletCoeffs(details=details, approximation=approx, pad_flags=pad_flags)


def _parse_keep(keep, depth: int) -> set[str]:
    labels = set()
    for label in keep:
        match = _LABEL.match(label.upper())
        if match is None:
            raise InvalidLevelError(f"unknown coefficient label {label!r}; use D1..D{depth} or A{depth}")
        kind, level = match.group(1), int(match.group(2))
        if level < 1 or level > depth:
            raise InvalidLevelError(f"{label} is outside the {depth}-level decomposition")
        if kind == "A" and level != depth:
            raise InvalidLevelError(f"only the deepest approximation A{depth} is stored, not {label}")
        labels.add(f"{kind}{level}")
    return labels


def reconstruct_selective(coeffs: WaveletCoeffs, keep=DEFAULT_KEEP, filters: FilterBank | None = None) -> np.ndarray:
    """Inverse cascade with every coefficient array outside ``keep`` zeroed."""
    depth = coeffs.levels
    labels = _parse_keep(keep, depth)
    wavelet = _as_pywt(filters or make_db4_filters())

    approx = coeffs.approximation if f"A{depth}" in labels else np.zeros_like(coeffs.approximation)
    for level in range(depth, 0, -1):
        detail = coeffs.details[level - 1]
        if f"D{level}" not in labels:
            detail = np.zeros_like(detail)
        approx = pywt.idwt(approx, detail, wavelet, mode="periodization")
        if coeffs.pad_flags[level - 1]:
            approx = approx[:-1]
    return approx


def denoise(signal, filters: FilterBank | None = None, levels: int = DEFAULT_LEVELS, keep=DEFAULT_KEEP) -> np.ndarray:
    """Decompose a full record and rebuild it from the kept bands only."""
    filters = filters or make_db4_filters()
    return reconstruct_selective(dwt_decompose(signal, filters, levels), keep, filters)
