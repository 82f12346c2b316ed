"""JSON run-config: sections ``data``, ``preprocess``, ``model``, ``hyper``, ``run``.

Unknown keys anywhere raise :class:`ConfigError`. Two presets exist:
``full`` (the full-size reference settings) and ``ci`` (a desk-scale
profile: 10x10x8 volumes, two 8-filter stages, 16 LSTM units, synthetic data).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..data_io import EEGDataset, read_eegb
from ..errors import ConfigError
from ..model import ModelConfig, ci_config
from ..preprocess import PreprocessConfig
from ..synthgen import SynthSpec, generate_dataset
from .training import Hyperparams


@dataclass
class DataSection:
    path: str | None = None
    synth: SynthSpec | None = None


@dataclass
class RunSection:
    mode: str = "cv"  # "cv" or "holdout"
    k: int = 5
    train_fraction: float = 0.8
    augment: bool = True
    classifier: str = "clmi"  # "clmi" or "csp_lda"
    csp_filters_per_end: int = 2
    seed: int = 0  # fold / split shuffling


@dataclass
class RunConfig:
    data: DataSection = field(default_factory=DataSection)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    hyper: Hyperparams = field(default_factory=Hyperparams)
    run: RunSection = field(default_factory=RunSection)

    def validate(self) -> None:
        if self.run.mode not in ("cv", "holdout"):
            raise ConfigError(f"run.mode must be 'cv' or 'holdout', got {self.run.mode!r}")
        if self.run.classifier not in ("clmi", "csp_lda"):
            raise ConfigError(f"run.classifier must be 'clmi' or 'csp_lda', got {self.run.classifier!r}")
        if self.run.k < 2:
            raise ConfigError("run.k must be >= 2")
        if not 0 < self.run.train_fraction < 1:
            raise ConfigError("run.train_fraction must lie in (0, 1)")
        self.model.validate()
        self.hyper.validate()
        h, w, _ = self.model.input_dims
        if (h, w) != (self.preprocess.volume_h, self.preprocess.volume_w):
            raise ConfigError(
                f"model.input_dims {self.model.input_dims} disagrees with the preprocess volume "
                f"{self.preprocess.volume_h}x{self.preprocess.volume_w}"
            )

    def check_dataset(self, dataset: EEGDataset) -> None:
        self.preprocess.check_band(dataset.fs)
        self.preprocess.check_windows(dataset.n_samples)
        if self.run.classifier == "clmi":
            if self.model.input_dims[2] != dataset.n_channels:
                raise ConfigError(f"model expects {self.model.input_dims[2]} channels, data has {dataset.n_channels}")
            if self.model.n_classes != dataset.n_classes:
                raise ConfigError(f"model has {self.model.n_classes} classes, data has {dataset.n_classes}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _reject_unknown(cls, raw: dict, where: str) -> None:
    unknown = set(raw) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")


def _build(cls, raw: dict, where: str):
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def config_from_dict(raw: dict, base: RunConfig | None = None) -> RunConfig:
    """Overlay ``raw`` on ``base`` (default: full profile), section by section and key by key."""
    base = base or RunConfig()
    if not isinstance(raw, dict):
        raise ConfigError("run-config must be a JSON object")
    unknown = set(raw) - {"data", "preprocess", "model", "hyper", "run"}
    if unknown:
        raise ConfigError(f"unknown section(s) {sorted(unknown)}")
    cfg = replace(base)
    for section, cls in (("preprocess", PreprocessConfig), ("model", ModelConfig), ("hyper", Hyperparams), ("run", RunSection)):
        if section in raw:
            if not isinstance(raw[section], dict):
                raise ConfigError(f"{section}: expected an object")
            _reject_unknown(cls, raw[section], section)
            setattr(cfg, section, _build(cls, {**asdict(getattr(base, section)), **raw[section]}, section))
    if "data" in raw:
        data = raw["data"]
        if not isinstance(data, dict):
            raise ConfigError("data: expected an object")
        unknown = set(data) - {"path", "synth"}
        if unknown:
            raise ConfigError(f"data: unknown key(s) {sorted(unknown)}")
        synth = base.data.synth
        if "synth" in data:
            raw_synth = data["synth"]
            if raw_synth is None:
                synth = None
            elif not isinstance(raw_synth, dict):
                raise ConfigError("data.synth: expected an object")
            else:
                _reject_unknown(SynthSpec, raw_synth, "data.synth")
                prior = asdict(base.data.synth) if base.data.synth else {}
                synth = _build(SynthSpec, {**prior, **raw_synth}, "data.synth")
        cfg.data = DataSection(data.get("path", base.data.path), synth)
    cfg.validate()
    return cfg


def full_profile() -> RunConfig:
    return RunConfig()


def ci_profile() -> RunConfig:
    return RunConfig(
        data=DataSection(synth=SynthSpec(n_trials_per_class=50, n_channels=8, n_samples=200, erd_depth=0.8, noise_scale=0.1)),
        preprocess=PreprocessConfig(window_samples=100, window_stride_samples=25, n_windows=5, volume_h=10, volume_w=10),
        model=ci_config(),
        hyper=Hyperparams(epochs=15, batch_size=64),
        run=RunSection(),
    )


PROFILES = {"full": full_profile, "ci": ci_profile}


def load_config(path=None, profile: str = "full") -> RunConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    base = PROFILES[profile]()
    if path is None:
        base.validate()
        return base
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    return config_from_dict(raw, base)


def load_dataset(cfg: RunConfig, path=None) -> EEGDataset:
    """Dataset from an explicit path, else ``data.path``, else the ``data.synth`` spec."""
    path = path or cfg.data.path
    if path is not None:
        return read_eegb(path)
    if cfg.data.synth is not None:
        return generate_dataset(cfg.data.synth)
    raise ConfigError("no dataset: give a data path or a data.synth section")
