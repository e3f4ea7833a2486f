import math
import re
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel

from functionality.errors import (
    AnnotationParseError,
    ConfigError,
    HeaderParseError,
    InsufficientClassError,
    MissingArtifactError,
    TruncatedSignalError,
    UnsupportedFormatError,
)
from functionality.logger import get_logger
from schemas.records import (
    ANNOTATION_SYMBOLS,
    BEAT_CODE_CLASSES,
    BEAT_CODES,
    AnnotationEntry,
    AnnotationList,
    DatasetSplit,
    HeartbeatClass,
    RecordHeader,
    SignalRecord,
    SignalSpec,
    SplitStrategy,
)

logger = get_logger(__name__)

SUPPORTED_FORMAT = 212

# annotation pseudo-codes
SKIP, NUM, SUB, CHN, AUX = 59, 60, 61, 62, 63

_GAIN = re.compile(r"^(?P<gain>[-+]?[\d.]+(?:[eE][-+]?\d+)?)(?:\((?P<baseline>[-+]?\d+)\))?(?:/(?P<units>\S+))?$")
_FORMAT = re.compile(r"^(?P<format>\d+)")

FETCH_HINT = "download the MIT-BIH Arrhythmia Database into ECG_DATA_DIR"


# ---------------------------------------------------------------------------
# header
# ---------------------------------------------------------------------------

def parse_header(text: str) -> RecordHeader:
    """Parse a WFDB ``.hea`` file. Strict: no WFDB defaults are filled in."""
    lines = [(n, line.strip()) for n, line in enumerate(text.splitlines(), start=1)]
    lines = [(n, line) for n, line in lines if line and not line.startswith("#")]
    if not lines:
        raise HeaderParseError("header is empty", 1)

    line_no, record_line = lines[0]
    fields = record_line.split()
    if len(fields) < 4:
        raise HeaderParseError(
            f"record line needs name, signal count, sampling rate and sample count: {record_line!r}", line_no
        )
    try:
        n_signals = int(fields[1].split("/")[0])
        sampling_rate = float(fields[2].split("/")[0].split("(")[0])
        n_samples = int(fields[3])
    except ValueError:
        raise HeaderParseError(f"non-numeric field in record line: {record_line!r}", line_no)
    if n_signals < 1:
        raise HeaderParseError("record declares no signals", line_no)
    if sampling_rate <= 0:
        raise HeaderParseError(f"sampling rate must be positive, got {sampling_rate}", line_no)

    signal_lines = lines[1:1 + n_signals]
    if len(signal_lines) < n_signals:
        last = lines[-1][0]
        raise HeaderParseError(f"expected {n_signals} signal lines, found {len(signal_lines)}", last)

    signals = [_parse_signal_line(n, line) for n, line in signal_lines]
    return RecordHeader(
        record_name=fields[0].split("/")[0],
        n_signals=n_signals,
        sampling_rate_hz=sampling_rate,
        n_samples=n_samples,
        signals=signals,
    )


def _parse_signal_line(line_no: int, line: str) -> SignalSpec:
    fields = line.split()
    if len(fields) < 6:
        raise HeaderParseError(
            f"signal line needs file, format, gain, resolution, zero and initial value: {line!r}", line_no
        )
    fmt = _FORMAT.match(fields[1])
    if fmt is None:
        raise HeaderParseError(f"bad storage format {fields[1]!r}", line_no)
    storage_format = int(fmt.group("format"))
    if storage_format != SUPPORTED_FORMAT:
        raise UnsupportedFormatError(
            f"line {line_no}: storage format {storage_format} is not supported (only {SUPPORTED_FORMAT})"
        )

    gain = _GAIN.match(fields[2])
    if gain is None:
        raise HeaderParseError(f"bad ADC gain field {fields[2]!r}", line_no)
    try:
        adc_gain = float(gain.group("gain"))
        adc_zero = int(fields[4])
        initial_value = int(fields[5])
    except ValueError:
        raise HeaderParseError(f"non-numeric field in signal line: {line!r}", line_no)
    if adc_gain <= 0:
        raise HeaderParseError(f"ADC gain must be positive, got {adc_gain}", line_no)

    baseline = gain.group("baseline")
    return SignalSpec(
        file_name=fields[0],
        storage_format=storage_format,
        adc_gain=adc_gain,
        adc_baseline=int(baseline) if baseline is not None else adc_zero,
        initial_value=initial_value,
        description=" ".join(fields[8:]),
    )


# ---------------------------------------------------------------------------
# format 212
# ---------------------------------------------------------------------------

def decode_adc_212(raw: bytes, n_values: int) -> np.ndarray:
    """Unpack ``n_values`` 12-bit two's-complement samples, two per three bytes."""
    expected = math.ceil(n_values * 1.5)
    if len(raw) < expected:
        raise TruncatedSignalError(expected, len(raw))
    n_pairs = math.ceil(n_values / 2)
    data = np.zeros(3 * n_pairs, dtype=np.int32)
    data[:expected] = np.frombuffer(raw, dtype=np.uint8, count=expected)
    triples = data.reshape(-1, 3)

    adc = np.empty(2 * n_pairs, dtype=np.int32)
    adc[0::2] = ((triples[:, 1] & 0x0F) << 8) | triples[:, 0]
    adc[1::2] = ((triples[:, 1] & 0xF0) << 4) | triples[:, 2]
    adc[adc > 2047] -= 4096
    return adc[:n_values]


def encode_adc_212(adc) -> bytes:
    """Inverse of :func:`decode_adc_212`; values must fit in 12 bits."""
    adc = np.asarray(adc, dtype=np.int32)
    if adc.size and (adc.min() < -2048 or adc.max() > 2047):
        raise ValueError("format 212 holds values in [-2048, 2047]")
    n_values = adc.size
    words = np.zeros(2 * math.ceil(n_values / 2), dtype=np.int32)
    words[:n_values] = adc & 0xFFF
    s1, s2 = words[0::2], words[1::2]

    packed = np.empty((s1.size, 3), dtype=np.uint8)
    packed[:, 0] = s1 & 0xFF
    packed[:, 1] = ((s1 >> 8) & 0x0F) | ((s2 >> 4) & 0xF0)
    packed[:, 2] = s2 & 0xFF
    return packed.tobytes()[:math.ceil(n_values * 1.5)]


def encode_signal_212(samples) -> bytes:
    """Pack an interleaved (n_samples, n_signals) ADC matrix, frame by frame."""
    return encode_adc_212(np.asarray(samples).reshape(-1))


def decode_signal_212(raw: bytes, header: RecordHeader, lead_index: int = 0) -> SignalRecord:
    if not 0 <= lead_index < header.n_signals:
        raise ConfigError(f"lead {lead_index} not in record {header.record_name} ({header.n_signals} signals)")
    n_samples = header.n_samples
    if n_samples == 0:
        # length not recorded in the header; take every complete frame in the file
        n_samples = (len(raw) * 2 // 3) // header.n_signals
        header = header.model_copy(update={"n_samples": n_samples})

    adc = decode_adc_212(raw, n_samples * header.n_signals).reshape(n_samples, header.n_signals)
    spec = header.signals[lead_index]
    samples = (adc[:, lead_index] - spec.adc_baseline) / spec.adc_gain
    return SignalRecord(header=header, samples=samples.astype(np.float64), lead_index=lead_index)


# ---------------------------------------------------------------------------
# annotations
# ---------------------------------------------------------------------------

def parse_annotations(raw: bytes) -> AnnotationList:
    """Decode an MIT-format annotation file.

    Pseudo-code words (SKIP, NUM, SUB, CHN, AUX) update the annotation they follow and are
    never emitted themselves. ``chan`` and ``num`` carry over to later annotations.
    """
    if len(raw) % 2:
        raise AnnotationParseError("annotation file has an odd byte count", len(raw) - 1)
    words = np.frombuffer(raw, dtype="<u2")
    n_words = words.size

    entries: list[AnnotationEntry] = []
    pending: dict | None = None
    sample, chan, num = 0, 0, 0
    i = 0
    while i < n_words:
        word = int(words[i])
        code, value = word >> 10, word & 0x3FF
        offset = 2 * i

        if code == 0 and value == 0:
            break
        if code == SKIP:
            if i + 2 >= n_words:
                raise AnnotationParseError("SKIP interval runs past end of file", offset)
            interval = (int(words[i + 1]) << 16) | int(words[i + 2])
            if interval >= 1 << 31:
                interval -= 1 << 32
            sample += interval
            i += 3
            continue
        if code == AUX:
            n_words_aux = (value + 1) // 2
            if i + 1 + n_words_aux > n_words:
                raise AnnotationParseError(f"AUX payload of {value} bytes runs past end of file", offset)
            payload = raw[offset + 2:offset + 2 + value]
            if pending is not None:
                pending["aux"] = payload.split(b"\x00", 1)[0].decode("latin-1")
            i += 1 + n_words_aux
            continue
        if code in (NUM, SUB, CHN):
            if code == CHN:
                field, field_value = "channel", value
                chan = value
            else:
                # num and subtyp are signed chars
                field_value = ((value & 0xFF) ^ 0x80) - 0x80
                field = "num" if code == NUM else "subtype"
                if code == NUM:
                    num = field_value
            if pending is not None:
                pending[field] = field_value
            i += 1
            continue

        if pending is not None:
            entries.append(AnnotationEntry(**pending))
        sample += value
        if sample < 0:
            raise AnnotationParseError(f"annotation time went negative ({sample})", offset)
        pending = dict(
            sample_index=sample,
            symbol_code=code,
            beat_class=BEAT_CODE_CLASSES.get(code),
            channel=chan,
            num=num,
            subtype=0,
            aux="",
        )
        i += 1

    if pending is not None:
        entries.append(AnnotationEntry(**pending))
    return AnnotationList(entries=entries)


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def _require_file(path: Path) -> bytes:
    if not path.is_file():
        raise MissingArtifactError(path, hint=FETCH_HINT)
    return path.read_bytes()


def read_header(data_dir, record: str) -> RecordHeader:
    raw = _require_file(Path(data_dir) / f"{record}.hea")
    return parse_header(raw.decode("latin-1"))


def read_record(data_dir, record: str, lead_index: int = 0) -> SignalRecord:
    header = read_header(data_dir, record)
    if not 0 <= lead_index < header.n_signals:
        raise ConfigError(f"lead {lead_index} not in record {record} ({header.n_signals} signals)")
    raw = _require_file(Path(data_dir) / header.signals[lead_index].file_name)
    signal = decode_signal_212(raw, header, lead_index)
    logger.debug(f"record {record}: {signal.samples.size} samples at {signal.fs:g} Hz, lead {lead_index}")
    return signal


def read_annotations(data_dir, record: str, extension: str = "atr") -> AnnotationList:
    return parse_annotations(_require_file(Path(data_dir) / f"{record}.{extension}"))


def has_annotations(data_dir, record: str, extension: str) -> bool:
    return (Path(data_dir) / f"{record}.{extension}").is_file()


# ---------------------------------------------------------------------------
# inventory, distribution, split
# ---------------------------------------------------------------------------

class ClassHistogram(BaseModel):
    counts: dict[str, int] = {}  # symbol -> count, most frequent first
    selected: list[str] = []  # symbols of the five classes present in ``counts``


SELECTED_SYMBOLS = {ANNOTATION_SYMBOLS[code]: cls for code, cls in BEAT_CODE_CLASSES.items()}


def class_distribution(annotation_sets, beats_only: bool = False) -> ClassHistogram:
    """Count annotation symbols over every record; flag the five selected beat symbols."""
    counts: dict[str, int] = {}
    for annotations in annotation_sets:
        for entry in annotations.entries:
            if beats_only and entry.symbol_code not in BEAT_CODES:
                continue
            counts[entry.symbol] = counts.get(entry.symbol, 0) + 1
    ordered = dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))
    return ClassHistogram(counts=ordered, selected=[s for s in ordered if s in SELECTED_SYMBOLS])


def build_beat_inventory(record: str, annotations: AnnotationList) -> list[dict]:
    """Rows (record, sample_index, class) for channel-0 beats of the five classes."""
    return [
        {"record": record, "sample_index": e.sample_index, "class": e.beat_class.name}
        for e in annotations.beats(channel=0)
    ]


def split_dataset(beats: pd.DataFrame, strategy: SplitStrategy, seed: int) -> DatasetSplit:
    """Cut labeled beats 2:1 into train and test.

    ``beats`` needs columns ``record``, ``beat`` (sample index of the R peak) and ``label``.
    """
    strategy = SplitStrategy(strategy)
    rng = np.random.default_rng(seed)
    keys = list(zip(beats["record"].astype(str), beats["beat"].astype(int)))
    labels = beats["label"].to_numpy()

    if strategy is SplitStrategy.STRATIFIED_BEAT:
        train_idx: list[int] = []
        for label in sorted(np.unique(labels)):
            members = np.flatnonzero(labels == label)
            if members.size < 3:
                raise InsufficientClassError(
                    f"class {HeartbeatClass(int(label)).name} has {members.size} beats; stratifying needs at least 3"
                )
            members = members[rng.permutation(members.size)]
            train_idx.extend(members[:int(round(members.size * 2 / 3))].tolist())
        in_train = np.zeros(len(keys), dtype=bool)
        in_train[train_idx] = True
    else:
        records = sorted(set(k[0] for k in keys))
        records = [records[j] for j in rng.permutation(len(records))]
        per_record = beats.groupby(beats["record"].astype(str)).size()
        target = len(keys) * 2 / 3
        train_records, taken = set(), 0
        for record in records:
            if taken >= target:
                break
            train_records.add(record)
            taken += int(per_record[record])
        in_train = np.array([k[0] in train_records for k in keys], dtype=bool)

    train = sorted(k for k, flag in zip(keys, in_train) if flag)
    test = sorted(k for k, flag in zip(keys, in_train) if not flag)
    logger.info(f"split ({strategy.value}, seed {seed}): {len(train)} train / {len(test)} test beats")
    return DatasetSplit(train_beats=train, test_beats=test, strategy=strategy, seed=seed)
