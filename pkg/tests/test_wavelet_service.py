import numpy as np
import pytest

from functionality.errors import InvalidLevelError, SignalTooShortError
from schemas.signals import PseudoFrequencyRule
from service.wavelet_service import (
    denoise,
    dwt_decompose,
    levels_for_cutoff,
    make_db4_filters,
    pseudo_frequency,
    reconstruct_selective,
)

ALL_BANDS = [f"D{k}" for k in range(1, 10)] + ["A9"]
FS = 360


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def test_db4_filter_invariants():
    bank = make_db4_filters()
    assert bank.lowpass_dec.size == 8
    bank.check_invariants(tol=1e-10)


def test_pseudo_frequency_of_level_nine():
    assert round(pseudo_frequency(9), 4) == 0.4922
    assert pseudo_frequency(9) <= 0.5
    assert levels_for_cutoff(0.5) == 9


def test_pseudo_frequency_rule_is_configurable():
    assert pseudo_frequency(1, PseudoFrequencyRule(k_c=0.5, f_s=250.0)) == 62.5
    with pytest.raises(ValueError):
        PseudoFrequencyRule(k_c=1.5)
    with pytest.raises(InvalidLevelError):
        pseudo_frequency(0)


def test_perfect_reconstruction_on_random_signals():
    rng = np.random.default_rng(11)
    bank = make_db4_filters()
    for trial in range(100):
        n = int(rng.integers(512, 5000))
        x = rng.normal(size=n)
        coeffs = dwt_decompose(x, bank, 9)
        rebuilt = reconstruct_selective(coeffs, ALL_BANDS, bank)
        assert rebuilt.shape == x.shape
        assert np.linalg.norm(rebuilt - x) / np.linalg.norm(x) <= 1e-6, f"trial {trial}, n={n}"


def test_energy_conservation_without_padding():
    rng = np.random.default_rng(5)
    bank = make_db4_filters()
    for _ in range(100):
        x = rng.normal(size=512 * int(rng.integers(1, 9)))
        coeffs = dwt_decompose(x, bank, 9)
        assert not any(coeffs.pad_flags)
        energy = sum(float(np.sum(d ** 2)) for d in coeffs.details) + float(np.sum(coeffs.approximation ** 2))
        assert abs(energy - float(np.sum(x ** 2))) / float(np.sum(x ** 2)) <= 1e-6


def test_odd_lengths_are_padded_per_level():
    coeffs = dwt_decompose(np.ones(1001), make_db4_filters(), 3)
    assert coeffs.pad_flags == [True, True, True]
    assert [d.size for d in coeffs.details] == [501, 251, 126]


def test_denoise_removes_powerline_hum():
    t = np.arange(20 * FS) / FS
    hum = np.sin(2 * np.pi * 60 * t)
    assert _rms(denoise(hum)) < 0.2 * _rms(hum)


def test_denoise_removes_baseline_wander():
    t = np.arange(20 * FS) / FS
    drift = np.sin(2 * np.pi * 1.0 * t)
    assert _rms(denoise(drift)) < 0.2 * _rms(drift)


def test_denoise_keeps_qrs_band():
    t = np.arange(20 * FS) / FS
    qrs_band = np.sin(2 * np.pi * 8 * t)
    assert _rms(denoise(qrs_band)) > 0.8 * _rms(qrs_band)


def test_too_short_for_depth():
    with pytest.raises(SignalTooShortError):
        dwt_decompose(np.zeros(511), make_db4_filters(), 9)


def test_keep_labels_are_validated():
    coeffs = dwt_decompose(np.zeros(1024), make_db4_filters(), 9)
    for bad in (["A3"], ["D10"], ["X1"]):
        with pytest.raises(InvalidLevelError):
            reconstruct_selective(coeffs, bad)


def _tone_power(y, freq, fs=FS):
    """Power of ``y`` at ``freq`` relative to a unit-amplitude sinusoid (integer cycle count assumed)."""
    t = np.arange(y.size) / fs
    a = 2 / y.size * np.dot(y, np.sin(2 * np.pi * freq * t))
    b = 2 / y.size * np.dot(y, np.cos(2 * np.pi * freq * t))
    return a * a + b * b


def test_constant_signal_lives_in_the_approximation():
    coeffs = dwt_decompose(np.full(1024, 3.0), make_db4_filters(), 9)
    for detail in coeffs.details:
        assert np.max(np.abs(detail)) < 1e-9
    np.testing.assert_allclose(coeffs.approximation, 3.0 * 2 ** 4.5, rtol=1e-9)


def test_impulse_detail_is_one_phase_of_the_highpass_taps():
    bank = make_db4_filters()
    impulse = np.zeros(512)
    impulse[0] = 1.0
    d1 = dwt_decompose(impulse, bank, 9).details[0]
    assert np.count_nonzero(np.abs(d1) > 1e-12) == 4
    phases = [bank.highpass_dec[0::2], bank.highpass_dec[1::2]]
    phases += [p[::-1] for p in phases]
    assert any(
        np.allclose(np.roll(d1, -shift)[:4], taps, atol=1e-12) for shift in range(d1.size) for taps in phases
    )


def test_powerline_energy_sits_in_d2_and_d3():
    # 9216 samples: a multiple of 2**9 holding a whole number of 50 Hz cycles
    t = np.arange(9216) / FS
    coeffs = dwt_decompose(np.sin(2 * np.pi * 50 * t), make_db4_filters(), 9)
    energies = [float(np.sum(d ** 2)) for d in coeffs.details]
    total = sum(energies) + float(np.sum(coeffs.approximation ** 2))
    assert (energies[1] + energies[2]) / total >= 0.95


def test_transform_is_linear():
    rng = np.random.default_rng(21)
    bank = make_db4_filters()
    for n in (1024, 3001):
        x, y = rng.normal(size=n), rng.normal(size=n)
        a, b = 2.5, -0.75
        left = dwt_decompose(a * x + b * y, bank, 9)
        cx, cy = dwt_decompose(x, bank, 9), dwt_decompose(y, bank, 9)
        for k, detail in enumerate(left.details):
            np.testing.assert_allclose(detail, a * cx.details[k] + b * cy.details[k], atol=1e-9)
        np.testing.assert_allclose(left.approximation, a * cx.approximation + b * cy.approximation, atol=1e-9)


def test_denoise_is_idempotent_on_kept_bands():
    kept = denoise(np.random.default_rng(8).normal(size=4096))
    again = denoise(kept)
    assert np.linalg.norm(again - kept) / np.linalg.norm(kept) <= 1e-6


def test_empty_keep_set_gives_silence():
    coeffs = dwt_decompose(np.random.default_rng(2).normal(size=1024), make_db4_filters(), 9)
    np.testing.assert_array_equal(reconstruct_selective(coeffs, []), np.zeros(1024))


def test_drift_plus_qrs_band_mixture():
    # 23040 samples = 64 s: whole cycles of both tones, no padding
    t = np.arange(23040) / FS
    mixed = np.sin(2 * np.pi * 1.0 * t) + np.sin(2 * np.pi * 12 * t)
    out = denoise(mixed)
    assert _tone_power(out, 12) >= 0.8
    assert _tone_power(out, 1.0) <= 0.04
