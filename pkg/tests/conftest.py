import json
import os
import struct
from collections import namedtuple
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from config import ECG_DATA_DIR
from schemas.dataset import ALL_FEATURES, FeatureMode
from schemas.network import Activation, ModelConfig, bilstm, dense, dropout, lstm
from service.feature_service import dataset_frame, fit_normalization
from service.wfdb_service import AUX, CHN, NUM, SKIP, encode_signal_212

FS = 360

SyntheticECG = namedtuple("SyntheticECG", "signal r p q s t")


def synthetic_ecg(n_beats: int = 12, seed: int = 0, fs: int = FS) -> SyntheticECG:
    """Gaussian PQRST beats with jittered intervals and amplitudes; returns the true indices too."""
    rng = np.random.default_rng(seed)
    rr = rng.uniform(0.75, 1.05, size=n_beats)
    r_times = 0.6 + np.concatenate(([0.0], np.cumsum(rr[:-1])))
    n = int(round((r_times[-1] + 0.8) * fs))
    t = np.arange(n, dtype=np.float64)
    x = np.zeros(n)
    truth = {k: [] for k in "rpqst"}
    for r_time in r_times:
        r = int(round(r_time * fs))
        points = {
            "r": r,
            "p": r - int(round(rng.uniform(0.16, 0.22) * fs)),
            "q": r - int(rng.integers(12, 17)),
            "s": r + int(rng.integers(12, 17)),
            "t": r + int(round(rng.uniform(0.26, 0.34) * fs)),
        }
        scale = rng.uniform(0.9, 1.1)
        for name, amplitude, sigma in (("p", 0.1, 9.0), ("q", -0.1, 3.0), ("r", 1.0, 4.3),
                                       ("s", -0.2, 3.0), ("t", 0.15, 14.4)):
            x += scale * amplitude * np.exp(-0.5 * ((t - points[name]) / sigma) ** 2)
            truth[name].append(points[name])
    return SyntheticECG(signal=x, **{k: np.array(v) for k, v in truth.items()})


def annotation_bytes(entries) -> bytes:
    """MIT-format annotation file for [(sample, code, extras), ...]; extras may set chan, num, aux."""
    out = bytearray()
    previous = 0
    for sample, code, *rest in entries:
        extras = rest[0] if rest else {}
        delta = sample - previous
        if delta > 1023 or delta < 0:
            out += struct.pack("<H", SKIP << 10)
            unsigned = delta & 0xFFFFFFFF
            out += struct.pack("<HH", unsigned >> 16, unsigned & 0xFFFF)
            delta = 0
        out += struct.pack("<H", (code << 10) | delta)
        if "chan" in extras:
            out += struct.pack("<H", (CHN << 10) | extras["chan"])
        if "num" in extras:
            out += struct.pack("<H", (NUM << 10) | (extras["num"] & 0xFF))
        if "aux" in extras:
            payload = extras["aux"]
            out += struct.pack("<H", (AUX << 10) | len(payload))
            out += payload + (b"\x00" if len(payload) % 2 else b"")
        previous = sample
    out += struct.pack("<H", 0)
    return bytes(out)


def write_record(directory, name: str, signal_mv, beats, gain: float = 200.0, baseline: int = 1024,
                 extension: str = "atr"):
    """Two-lead format-212 record (lead 1 is half of lead 0) with one annotation per entry of ``beats``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lead0 = np.round(np.asarray(signal_mv) * gain).astype(np.int32) + baseline
    lead1 = np.round(np.asarray(signal_mv) * gain / 2).astype(np.int32) + baseline
    frames = np.stack([lead0, lead1], axis=1)
    (directory / f"{name}.dat").write_bytes(encode_signal_212(frames))
    (directory / f"{name}.hea").write_text(
        f"{name} 2 {FS} {len(lead0)}\n"
        f"{name}.dat 212 {gain:g} 11 {baseline} {lead0[0]} 0 0 MLII\n"
        f"{name}.dat 212 {gain:g} 11 {baseline} {lead1[0]} 0 0 V5\n"
    )
    (directory / f"{name}.{extension}").write_bytes(annotation_bytes(beats))
    return frames


@pytest.fixture
def ecg():
    return synthetic_ecg()


@pytest.fixture
def mini_database(tmp_path):
    """Record 100 with 30 synthetic beats, all annotated normal."""
    data = synthetic_ecg(n_beats=30, seed=3)
    write_record(tmp_path / "mitdb", "100", data.signal, [(int(r), 1) for r in data.r])
    return tmp_path / "mitdb", data


@pytest.fixture
def feature_artifacts(tmp_path):
    """A features/ directory as the `features` stage writes it: 60 beats, 40 train / 20 test."""
    rng = np.random.default_rng(7)
    labels = np.arange(60) % 5
    rows = []
    for beat, label in enumerate(labels):
        values = rng.normal(size=len(ALL_FEATURES)) + label
        row = {"record": "100", "beat": 1000 * (beat + 1)}
        row.update(dict(zip(ALL_FEATURES, np.abs(values) + 0.1)))
        row["label"] = int(label)
        rows.append(row)
    dataset = dataset_frame(rows)
    out = tmp_path / "results" / "features"
    out.mkdir(parents=True)
    dataset.to_csv(out / "dataset.csv", index=False)
    train = dataset.iloc[:40]
    stats = fit_normalization(train, FeatureMode.TEN)
    (out / "normalization.json").write_text(json.dumps(stats.model_dump(mode="json")))
    keys = [[r, int(b)] for r, b in zip(dataset["record"], dataset["beat"])]
    (out / "split.json").write_text(json.dumps({"strategy": "stratified-beat", "seed": 1,
                                                "train": keys[:40], "test": keys[40:]}))
    return tmp_path / "results", dataset


@pytest.fixture
def toy_configs():
    """Small networks covering every layer kind."""
    softmax = dense(5, Activation.SOFTMAX)
    return {
        "bilstm": ModelConfig(name="toy-bilstm", sequence_length=4,
                              layers=[bilstm(3), bilstm(2), dropout(0.3), dense(4, Activation.TANH), softmax]),
        "lstm": ModelConfig(name="toy-lstm", sequence_length=4,
                            layers=[lstm(3), lstm(2), dense(4, Activation.TANH), softmax]),
        "dense": ModelConfig(name="toy-dense", sequence_length=4,
                             layers=[dense(6, Activation.TANH), dropout(0.2), softmax]),
    }


def mitbih_available() -> bool:
    return (Path(ECG_DATA_DIR) / "100.hea").is_file()


requires_mitbih = pytest.mark.skipif(not mitbih_available(), reason="MIT-BIH files not found under ECG_DATA_DIR")
requires_slow = pytest.mark.skipif(os.getenv("ECG_RUN_SLOW") != "1", reason="set ECG_RUN_SLOW=1 for training runs")
