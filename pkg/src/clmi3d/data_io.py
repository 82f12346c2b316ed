"""EEGB v1 trial container, plus reproducible stratified splits.

EEGB v1 layout (little-endian)::

    0   magic "EEGB"
    4   version     u32 = 1
    8   n_trials    u32
    12  n_channels  u32
    16  n_samples   u32
    20  n_classes   u32
    24  fs          f32
    28  reserved    u32 = 0
    32  labels      u8 * n_trials, zero-padded to a 4-byte boundary
    ..  data        f32, index ((t * n_channels + c) * n_samples + s)

A converter from BCI Competition IV 2a GDF files should emit 22 EEG channels,
the 4 s motor-imagery segment at 250 Hz (1000 samples) and labels
0..3 = left hand, right hand, feet, tongue.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    IoFailure,
    LabelOutOfRange,
    TooFewSamplesPerClass,
    TruncatedPayload,
    UnsupportedVersion,
    DataError,
)

MAGIC = b"EEGB"
VERSION = 1
HEADER = struct.Struct("<4s5IfI")
HEADER_SIZE = 32
assert HEADER.size == HEADER_SIZE


@dataclass
class EEGDataset:
    """Labelled trials stored as one ``(n_trials, n_channels, n_samples)`` array."""

    trials: np.ndarray
    labels: np.ndarray
    fs: float = 250.0
    n_classes: int = 4
    channel_names: list[str] | None = field(default=None, compare=False)

    def __post_init__(self):
        self.trials = np.asarray(self.trials)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.trials.ndim != 3:
            raise DataError(f"trials must be 3-D (n_trials, n_channels, n_samples), got {self.trials.shape}")
        if len(self.labels) != len(self.trials):
            raise DataError(f"{len(self.labels)} labels for {len(self.trials)} trials")
        if not self.fs > 0:
            raise DataError(f"fs must be positive, got {self.fs}")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise LabelOutOfRange(f"labels must lie in [0, {self.n_classes})")
        if self.channel_names is not None and len(self.channel_names) != self.n_channels:
            raise DataError("channel_names length does not match n_channels")

    @property
    def n_trials(self) -> int:
        return self.trials.shape[0]

    @property
    def n_channels(self) -> int:
        return self.trials.shape[1]

    @property
    def n_samples(self) -> int:
        return self.trials.shape[2]

    def subset(self, idx) -> "EEGDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return EEGDataset(self.trials[idx], self.labels[idx], self.fs, self.n_classes, self.channel_names)

    def __eq__(self, other):
        if not isinstance(other, EEGDataset):
            return NotImplemented
        return (
            self.fs == other.fs
            and self.n_classes == other.n_classes
            and self.trials.shape == other.trials.shape
            and self.trials.dtype == other.trials.dtype
            and self.trials.tobytes() == other.trials.tobytes()
            and np.array_equal(self.labels, other.labels)
        )


def _label_block_size(n_trials: int) -> int:
    return (n_trials + 3) // 4 * 4


def eegb_size(n_trials: int, n_channels: int, n_samples: int) -> int:
    """Byte size of an EEGB v1 file with the given dimensions."""
    return HEADER_SIZE + _label_block_size(n_trials) + 4 * n_trials * n_channels * n_samples


def write_eegb(dataset: EEGDataset, path) -> None:
    n, c, s = dataset.trials.shape
    header = HEADER.pack(MAGIC, VERSION, n, c, s, dataset.n_classes, dataset.fs, 0)
    labels = dataset.labels.astype(np.uint8).tobytes()
    labels += b"\x00" * (_label_block_size(n) - n)
    payload = np.ascontiguousarray(dataset.trials, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(labels)
            f.write(payload)
    except OSError as e:
        raise IoFailure(str(e)) from e


def read_header(path) -> dict:
    try:
        with open(path, "rb") as f:
            raw = f.read(HEADER_SIZE)
    except OSError as e:
        raise IoFailure(str(e)) from e
    if raw[:4] != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < HEADER_SIZE:
        raise TruncatedPayload(f"{path}: header is {len(raw)} bytes, expected {HEADER_SIZE}")
    _, version, n, c, s, k, fs, _ = HEADER.unpack(raw)
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: EEGB version {version} (only {VERSION} supported)")
    return {"version": version, "n_trials": n, "n_channels": c, "n_samples": s, "n_classes": k, "fs": fs}


def read_eegb(path) -> EEGDataset:
    h = read_header(path)
    n, c, s = h["n_trials"], h["n_channels"], h["n_samples"]
    raw = Path(path).read_bytes()
    expected = eegb_size(n, c, s)
    if len(raw) < expected:
        raise TruncatedPayload(f"{path}: {len(raw)} bytes, header implies {expected}")
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=HEADER_SIZE).astype(np.int64)
    if n and labels.max() >= h["n_classes"]:
        raise LabelOutOfRange(f"{path}: label {labels.max()} >= n_classes {h['n_classes']}")
    data = np.frombuffer(raw, dtype="<f4", count=n * c * s, offset=HEADER_SIZE + _label_block_size(n))
    trials = data.astype(np.float32).reshape(n, c, s)
    return EEGDataset(trials, labels, float(h["fs"]), h["n_classes"])


# --- reproducible shuffling -------------------------------------------------

_MASK64 = (1 << 64) - 1


class SplitMix64:
    """64-bit SplitMix generator; the shuffle contract for splits and folds."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next_u64() % n


def fisher_yates(items, rng: SplitMix64) -> list:
    """Shuffle a copy of ``items``; swaps position i with j = rng.below(i + 1), i descending."""
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = rng.below(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def _shuffled_class_indices(labels: np.ndarray, n_classes: int, seed: int) -> list[list[int]]:
    # one generator, consumed class by class in ascending class order
    rng = SplitMix64(seed)
    return [fisher_yates(np.flatnonzero(labels == c).tolist(), rng) for c in range(n_classes)]


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != fold)


def stratified_folds(dataset: EEGDataset, k: int, seed: int) -> FoldPlan:
    """Assign every trial to one of ``k`` folds, balanced within each class.

    Each class's shuffled members are dealt round-robin, starting where the
    previous class stopped so overall fold sizes also differ by at most one.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    counts = np.bincount(dataset.labels, minlength=dataset.n_classes)
    present = counts[counts > 0]
    if len(present) == 0 or present.min() < k:
        raise TooFewSamplesPerClass(f"every class needs >= {k} trials, counts are {counts.tolist()}")
    assignments = np.full(dataset.n_trials, -1, dtype=np.int64)
    start = 0
    for members in _shuffled_class_indices(dataset.labels, dataset.n_classes, seed):
        for pos, trial in enumerate(members):
            assignments[trial] = (start + pos) % k
        start = (start + len(members)) % k
    return FoldPlan(k, assignments, seed)


def holdout_indices(dataset: EEGDataset, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/test trial indices; class c contributes round(fraction * n_c) train trials."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    train, test = [], []
    for members in _shuffled_class_indices(dataset.labels, dataset.n_classes, seed):
        if not members:
            continue
        n_train = int(np.floor(train_fraction * len(members) + 0.5))
        if n_train == 0 or n_train == len(members):
            raise TooFewSamplesPerClass(
                f"a class with {len(members)} trials cannot be split at fraction {train_fraction}"
            )
        train += members[:n_train]
        test += members[n_train:]
    return np.array(sorted(train), dtype=np.int64), np.array(sorted(test), dtype=np.int64)


def holdout_split(dataset: EEGDataset, train_fraction: float, seed: int) -> tuple[EEGDataset, EEGDataset]:
    train, test = holdout_indices(dataset, train_fraction, seed)
    return dataset.subset(train), dataset.subset(test)
