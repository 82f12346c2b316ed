"""Synthetic motor-imagery EEG with class-dependent ERD/ERS.

Every channel carries 1/f background noise plus an alpha and a beta
sinusoid. On the channels mapped to a trial's class the alpha amplitude is
scaled by ``1 - erd_depth`` and the beta amplitude by ``1 + ers_gain``.
Trial ``i`` draws from its own stream, seeded by ``(seed, i)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_io import EEGDataset
from .errors import BadSpec


@dataclass
class SynthSpec:
    n_trials_per_class: int = 50
    n_channels: int = 8
    n_samples: int = 1000
    fs: float = 250.0
    n_classes: int = 4
    alpha_hz: float = 10.0
    beta_hz: float = 22.0
    alpha_amplitude: float = 1.0
    beta_amplitude: float = 0.5
    erd_depth: float = 0.8
    ers_gain: float = 0.0
    noise_scale: float = 0.1
    # None -> class c affects channels [2c, 2c+1] (mod n_channels)
    class_channel_map: list[list[int]] | None = None
    seed: int = 0

    def channel_map(self) -> list[list[int]]:
        if self.class_channel_map is not None:
            return [list(m) for m in self.class_channel_map]
        return [[(2 * c) % self.n_channels, (2 * c + 1) % self.n_channels] for c in range(self.n_classes)]

    def validate(self) -> None:
        if self.n_trials_per_class < 0 or self.n_channels < 1 or self.n_samples < 2 or self.n_classes < 1:
            raise BadSpec("counts must be positive")
        if not self.fs > 0:
            raise BadSpec("fs must be positive")
        if not 0 <= self.erd_depth <= 1:
            raise BadSpec(f"erd_depth must lie in [0, 1], got {self.erd_depth}")
        if self.ers_gain < 0 or self.noise_scale < 0:
            raise BadSpec("ers_gain and noise_scale must be non-negative")
        cmap = self.channel_map()
        if len(cmap) != self.n_classes:
            raise BadSpec(f"class_channel_map has {len(cmap)} entries for {self.n_classes} classes")
        for chans in cmap:
            if any(not 0 <= ch < self.n_channels for ch in chans):
                raise BadSpec(f"channel index out of range in {chans}")


def pink_noise(rng: np.random.Generator, n_channels: int, n_samples: int, fs: float) -> np.ndarray:
    """Unit-variance noise with 1/sqrt(f) amplitude spectrum (flat below 1 Hz, no DC)."""
    white = rng.standard_normal((n_channels, n_samples))
    spec = np.fft.rfft(white, axis=-1)
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / fs)
    shape = 1.0 / np.sqrt(np.maximum(freqs, 1.0))
    shape[0] = 0.0
    x = np.fft.irfft(spec * shape, n=n_samples, axis=-1)
    std = x.std(axis=-1, keepdims=True)
    return x / np.where(std > 0, std, 1.0)


def generate_trial(spec: SynthSpec, label: int, index: int) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, index])
    c, n = spec.n_channels, spec.n_samples
    t = np.arange(n) / spec.fs
    alpha_amp = np.full(c, spec.alpha_amplitude)
    beta_amp = np.full(c, spec.beta_amplitude)
    mapped = spec.channel_map()[label]
    alpha_amp[mapped] *= 1.0 - spec.erd_depth
    beta_amp[mapped] *= 1.0 + spec.ers_gain
    phases = rng.uniform(0.0, 2 * np.pi, size=(2, c, 1))
    x = alpha_amp[:, None] * np.sin(2 * np.pi * spec.alpha_hz * t + phases[0])
    x += beta_amp[:, None] * np.sin(2 * np.pi * spec.beta_hz * t + phases[1])
    if spec.noise_scale > 0:
        x += spec.noise_scale * pink_noise(rng, c, n, spec.fs)
    return x


def generate_dataset(spec: SynthSpec) -> EEGDataset:
    spec.validate()
    labels = np.repeat(np.arange(spec.n_classes), spec.n_trials_per_class)
    trials = np.empty((len(labels), spec.n_channels, spec.n_samples), dtype=np.float32)
    for i, label in enumerate(labels):
        trials[i] = generate_trial(spec, int(label), i)
    return EEGDataset(trials, labels, spec.fs, spec.n_classes)
