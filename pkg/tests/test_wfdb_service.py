import numpy as np
import pandas as pd
import pytest

from conftest import annotation_bytes, requires_mitbih, write_record
from config import ECG_DATA_DIR
from functionality.errors import (
    AnnotationParseError,
    ConfigError,
    HeaderParseError,
    InsufficientClassError,
    MissingArtifactError,
    TruncatedSignalError,
    UnsupportedFormatError,
)
from schemas.records import HeartbeatClass, SplitStrategy
from service.wfdb_service import (
    build_beat_inventory,
    class_distribution,
    decode_adc_212,
    decode_signal_212,
    encode_adc_212,
    parse_annotations,
    parse_header,
    read_annotations,
    read_record,
    split_dataset,
)

HEADER_100 = """100 2 360 650000
100.dat 212 200 11 1024 995 -22131 0 MLII
100.dat 212 200 11 1024 1011 20052 0 V5
# 69 M 1085 1629 x1
"""


def test_parse_header_mitbih_layout():
    header = parse_header(HEADER_100)
    assert header.record_name == "100"
    assert header.n_signals == 2
    assert header.sampling_rate_hz == 360.0
    assert header.n_samples == 650000
    assert [s.description for s in header.signals] == ["MLII", "V5"]
    assert header.signals[0].adc_gain == 200.0
    assert header.signals[0].adc_baseline == 1024
    assert header.signals[1].initial_value == 1011


def test_parse_header_baseline_in_parentheses():
    header = parse_header("x 1 250 10\nx.dat 212 100(-5)/mV 12 0 3 0 0 ECG\n")
    assert header.signals[0].adc_baseline == -5
    assert header.sampling_rate_hz == 250.0


def test_parse_header_reports_line_number():
    with pytest.raises(HeaderParseError) as exc:
        parse_header("100 2 360 650000\n100.dat 212 200 11 1024 995 -22131 0 MLII\n100.dat 212\n")
    assert exc.value.line_number == 3


def test_parse_header_rejects_other_formats():
    with pytest.raises(UnsupportedFormatError):
        parse_header("100 1 360 10\n100.dat 16 200 16 0 0 0 0 MLII\n")


def test_parse_header_rejects_nonpositive_gain():
    with pytest.raises(HeaderParseError):
        parse_header("100 1 360 10\n100.dat 212 0 11 1024 0 0 0 MLII\n")


def test_decode_212_known_bytes():
    # samples 0x123 and 0xABC (negative) packed into one triple
    raw = bytes([0x23, 0xA1, 0xBC])
    np.testing.assert_array_equal(decode_adc_212(raw, 2), [0x123, 0xABC - 4096])


def test_encode_decode_212_inverse():
    rng = np.random.default_rng(0)
    for n in (1, 2, 7, 1000):
        adc = rng.integers(-2048, 2048, size=n)
        np.testing.assert_array_equal(decode_adc_212(encode_adc_212(adc), n), adc)


def test_decode_212_truncated():
    with pytest.raises(TruncatedSignalError) as exc:
        decode_adc_212(b"\x00\x00\x00\x00", 4)
    assert (exc.value.expected, exc.value.actual) == (6, 4)


def test_decode_signal_converts_to_millivolts(tmp_path):
    signal = np.array([0.0, 0.5, -0.25, 1.0, 0.1])
    write_record(tmp_path, "200", signal, [(1, 1)])
    record = read_record(tmp_path, "200")
    np.testing.assert_allclose(record.samples, signal, atol=1 / 200)
    lead1 = read_record(tmp_path, "200", lead_index=1)
    np.testing.assert_allclose(lead1.samples, signal / 2, atol=1 / 200)


def test_decode_signal_infers_length_when_header_has_none(tmp_path):
    frames = write_record(tmp_path, "201", np.linspace(-1, 1, 9), [(0, 1)])
    header = parse_header((tmp_path / "201.hea").read_text().replace(" 9\n", " 0\n", 1))
    record = decode_signal_212((tmp_path / "201.dat").read_bytes(), header)
    assert record.samples.size == 9
    assert record.header.n_samples == 9
    np.testing.assert_allclose(record.samples, (frames[:, 0] - 1024) / 200)


def test_decode_signal_bad_lead(tmp_path):
    write_record(tmp_path, "202", np.zeros(4), [(0, 1)])
    with pytest.raises(ConfigError):
        read_record(tmp_path, "202", lead_index=2)


def test_missing_record_names_the_file(tmp_path):
    with pytest.raises(MissingArtifactError) as exc:
        read_record(tmp_path, "999")
    assert "999.hea" in exc.value.detail


def test_parse_annotations_intervals_and_skip():
    raw = annotation_bytes([(10, 1), (400, 5), (5400, 3), (5410, 28, {"aux": b"(AFL"})])
    annotations = parse_annotations(raw)
    assert [e.sample_index for e in annotations.entries] == [10, 400, 5400, 5410]
    assert [e.symbol for e in annotations.entries] == ["N", "V", "R", "+"]
    assert annotations.entries[1].beat_class is HeartbeatClass.PVC
    assert annotations.entries[3].aux == "(AFL"
    assert annotations.entries[3].beat_class is None


def test_parse_annotations_channel_persists():
    raw = annotation_bytes([(5, 1), (9, 1, {"chan": 1, "num": -2}), (20, 1), (30, 2, {"chan": 0})])
    entries = parse_annotations(raw).entries
    assert [e.channel for e in entries] == [0, 1, 1, 0]
    assert entries[1].num == -2
    assert entries[2].num == -2


def test_parse_annotations_errors():
    with pytest.raises(AnnotationParseError):
        parse_annotations(b"\x01\x04\x00")
    truncated = annotation_bytes([(5000, 1)])[:4]
    with pytest.raises(AnnotationParseError):
        parse_annotations(truncated)


def test_parse_annotations_empty_file():
    assert len(parse_annotations(b"")) == 0


def test_beat_inventory_keeps_channel_zero_selected_beats():
    raw = annotation_bytes([(5, 1), (9, 8), (20, 12), (30, 2, {"chan": 1}), (40, 3, {"chan": 0})])
    rows = build_beat_inventory("104", parse_annotations(raw))
    assert [(r["sample_index"], r["class"]) for r in rows] == [(5, "N"), (20, "PB"), (40, "RBBB")]


def test_class_distribution_counts_symbols():
    first = parse_annotations(annotation_bytes([(1, 1), (2, 1), (3, 5), (4, 28)]))
    second = parse_annotations(annotation_bytes([(1, 1), (2, 8)]))
    histogram = class_distribution([first, second])
    assert histogram.counts == {"N": 3, "+": 1, "A": 1, "V": 1}
    assert histogram.selected == ["N", "V"]
    assert "+" not in class_distribution([first, second], beats_only=True).counts


def _beats(per_class: dict[int, int], records=("100", "101", "102")) -> pd.DataFrame:
    rows, beat = [], 0
    for label, n in per_class.items():
        for i in range(n):
            beat += 1
            rows.append({"record": records[i % len(records)], "beat": beat, "label": label})
    return pd.DataFrame(rows)


def test_stratified_split_is_two_thirds_per_class_and_seeded():
    beats = _beats({0: 30, 1: 9, 2: 12, 3: 6, 4: 3})
    split = split_dataset(beats, SplitStrategy.STRATIFIED_BEAT, seed=1)
    labels = dict(zip(zip(beats["record"], beats["beat"]), beats["label"]))
    train_labels = np.array([labels[k] for k in split.train_beats])
    assert np.bincount(train_labels, minlength=5).tolist() == [20, 6, 8, 4, 2]
    assert not set(split.train_beats) & set(split.test_beats)
    assert split == split_dataset(beats, SplitStrategy.STRATIFIED_BEAT, seed=1)
    assert split.train_beats != split_dataset(beats, SplitStrategy.STRATIFIED_BEAT, seed=2).train_beats


def test_by_record_split_keeps_records_whole():
    beats = _beats({0: 60}, records=("100", "101", "102", "103", "104", "105"))
    split = split_dataset(beats, SplitStrategy.BY_RECORD, seed=4)
    train_records = {r for r, _ in split.train_beats}
    test_records = {r for r, _ in split.test_beats}
    assert not train_records & test_records
    assert len(split.train_beats) >= 40


def test_stratified_split_needs_three_beats_per_class():
    with pytest.raises(InsufficientClassError):
        split_dataset(_beats({0: 10, 3: 2}), SplitStrategy.STRATIFIED_BEAT, seed=1)


@pytest.mark.mitbih
@requires_mitbih
@pytest.mark.parametrize("record", ["100", "101", "119"])
def test_matches_reference_wfdb_reader(record):
    wfdb = pytest.importorskip("wfdb")
    reference = wfdb.rdrecord(f"{ECG_DATA_DIR}/{record}", physical=False)
    ours = read_record(ECG_DATA_DIR, record)
    spec = ours.header.signals[0]
    adc = np.round(ours.samples * spec.adc_gain + spec.adc_baseline).astype(np.int64)
    np.testing.assert_array_equal(adc, reference.d_signal[:, 0])

    reference_ann = wfdb.rdann(f"{ECG_DATA_DIR}/{record}", "atr")
    annotations = read_annotations(ECG_DATA_DIR, record)
    np.testing.assert_array_equal(annotations.sample_indices(), reference_ann.sample)
    assert [e.symbol for e in annotations.entries] == list(reference_ann.symbol)
