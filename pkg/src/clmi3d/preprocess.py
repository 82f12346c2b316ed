"""Trial preprocessing: common average reference, zero-phase bandpass,
sliding-window augmentation, and packing a window into a 3-D volume."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .data_io import EEGDataset
from .errors import InvalidBand, ShapeMismatch, SingleChannel, WindowOverrun


@dataclass
class PreprocessConfig:
    band_lo: float = 8.0
    band_hi: float = 30.0
    filter_order: int = 4
    # 900 = 30 x 30; 900 + 4 * 25 tiles a 1000-sample segment into exactly 5 windows
    window_samples: int = 900
    window_stride_samples: int = 25
    n_windows: int = 5
    volume_h: int = 30
    volume_w: int = 30

    def check_band(self, fs: float) -> None:
        if not 0 < self.band_lo < self.band_hi < fs / 2:
            raise InvalidBand(f"need 0 < {self.band_lo} < {self.band_hi} < fs/2 = {fs / 2}")
        if self.filter_order < 1:
            raise InvalidBand("filter_order must be >= 1")

    def check_windows(self, n_samples: int) -> None:
        if self.window_samples != self.volume_h * self.volume_w:
            raise WindowOverrun(
                f"window_samples {self.window_samples} != volume_h * volume_w = {self.volume_h * self.volume_w}"
            )
        if self.n_windows < 1 or self.window_stride_samples < 0:
            raise WindowOverrun("n_windows must be >= 1 and the stride non-negative")
        span = self.window_samples + (self.n_windows - 1) * self.window_stride_samples
        if span > n_samples:
            raise WindowOverrun(f"windows span {span} samples but trials have {n_samples}")


def car_filter(trial: np.ndarray) -> np.ndarray:
    """Subtract the across-channel mean at every time point. Works on (C, S) or (N, C, S)."""
    x = np.asarray(trial, dtype=np.float64)
    if x.shape[-2] < 2:
        raise SingleChannel("common average reference needs at least two channels")
    return x - x.mean(axis=-2, keepdims=True)


def bandpass(trial: np.ndarray, cfg: PreprocessConfig, fs: float) -> np.ndarray:
    """Forward-backward Butterworth bandpass along the last (time) axis."""
    cfg.check_band(fs)
    sos = signal.butter(cfg.filter_order, [cfg.band_lo, cfg.band_hi], btype="bandpass", fs=fs, output="sos")
    x = np.asarray(trial, dtype=np.float64)
    return signal.sosfiltfilt(sos, x, axis=-1, padtype="odd", padlen=3 * cfg.filter_order)


def window_starts(cfg: PreprocessConfig) -> list[int]:
    return [w * cfg.window_stride_samples for w in range(cfg.n_windows)]


def sliding_window_augment(trial: np.ndarray, cfg: PreprocessConfig) -> list[np.ndarray]:
    trial = np.asarray(trial)
    cfg.check_windows(trial.shape[-1])
    return [trial[..., s : s + cfg.window_samples] for s in window_starts(cfg)]


def to_volume(trial: np.ndarray, cfg: PreprocessConfig) -> np.ndarray:
    """(C, H*W) window -> (H, W, C) volume, time filling each channel's plane row by row.

    Also accepts a batch (N, C, H*W) -> (N, H, W, C).
    """
    trial = np.asarray(trial)
    h, w = cfg.volume_h, cfg.volume_w
    if trial.shape[-1] != h * w:
        raise ShapeMismatch(f"window has {trial.shape[-1]} samples, volume needs {h}x{w}={h * w}")
    vol = trial.reshape(trial.shape[:-1] + (h, w))
    return np.moveaxis(vol, -3, -1)


def to_sequence(volume: np.ndarray) -> np.ndarray:
    """(H, W, C) -> (H*W, C); batched (N, H, W, C) -> (N, H*W, C)."""
    volume = np.asarray(volume)
    return volume.reshape(volume.shape[:-3] + (volume.shape[-3] * volume.shape[-2], volume.shape[-1]))


def filter_dataset(dataset: EEGDataset, cfg: PreprocessConfig) -> EEGDataset:
    """CAR then bandpass on every trial; shapes unchanged."""
    x = bandpass(car_filter(dataset.trials), cfg, dataset.fs) if dataset.n_trials else dataset.trials.astype(np.float64)
    return EEGDataset(x, dataset.labels.copy(), dataset.fs, dataset.n_classes, dataset.channel_names)


def window_dataset(dataset: EEGDataset, cfg: PreprocessConfig, augment: bool) -> tuple[EEGDataset, np.ndarray]:
    """Cut windows from each trial.

    With ``augment`` every trial yields ``n_windows`` windows, otherwise only the
    first one. Returns the windowed dataset and, per window, the index of its
    source trial. Windows of one trial are contiguous in the output.
    """
    cfg.check_windows(dataset.n_samples)
    starts = window_starts(cfg) if augment else [0]
    n, c = dataset.n_trials, dataset.n_channels
    out = np.empty((n, len(starts), c, cfg.window_samples), dtype=dataset.trials.dtype)
    for i, s in enumerate(starts):
        out[:, i] = dataset.trials[:, :, s : s + cfg.window_samples]
    source = np.repeat(np.arange(n), len(starts))
    windows = EEGDataset(
        out.reshape(n * len(starts), c, cfg.window_samples),
        np.repeat(dataset.labels, len(starts)),
        dataset.fs,
        dataset.n_classes,
        dataset.channel_names,
    )
    return windows, source


def preprocess_pipeline(dataset: EEGDataset, cfg: PreprocessConfig, augment: bool) -> EEGDataset:
    """CAR -> bandpass -> windowing (all windows when ``augment``, else the first)."""
    cfg.check_band(dataset.fs)
    cfg.check_windows(dataset.n_samples)
    return window_dataset(filter_dataset(dataset, cfg), cfg, augment)[0]
