"""Cross-validation, holdout, ablation and sweep drivers plus result export.

Splits are made at trial level before any windowing, so a test trial's
windows never reach a training batch. Filtering (CAR + bandpass) is
per-trial and fits nothing, so it is applied once up front.
"""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, replace

import numpy as np

from ..baseline import CSPLDA
from ..data_io import EEGDataset, holdout_indices, stratified_folds
from ..errors import ConfigError, IoFailure
from ..model import CLMIModel, build_ablation_suite, build_model
from ..preprocess import PreprocessConfig, bandpass, filter_dataset, to_volume, window_dataset
from .metrics import CVMetrics, Metrics, confusion_matrix
from .runconfig import RunConfig
from .training import WindowSet, evaluate, train

SWEEP_AXES = ("lr", "lstm_units", "epochs")
SWEEP_GRIDS = {
    "lr": (0.1, 0.01, 0.001, 0.0001, 0.00001),
    "lstm_units": (64, 128, 256, 512, 1024),
    "epochs": (30, 50, 100, 150, 200),
}


def make_window_set(filtered: EEGDataset, idx, pcfg: PreprocessConfig, augment: bool, dtype="float32") -> WindowSet:
    """Window the trials ``idx`` of an already filtered dataset into model volumes.

    ``source`` holds the original (dataset-level) trial id of every window.
    """
    idx = np.asarray(idx, dtype=np.int64)
    windows, local = window_dataset(filtered.subset(idx), pcfg, augment)
    volumes = to_volume(windows.trials, pcfg).astype(dtype, copy=False)
    return WindowSet(volumes, windows.labels, idx[local])


@dataclass
class FoldResult:
    fold: int
    metrics: Metrics
    train_trials: np.ndarray
    test_trials: np.ndarray
    seen_trials: np.ndarray  # every trial id that appeared in a training batch
    history: list[dict]


@dataclass
class RunResult:
    folds: list[FoldResult]
    config: RunConfig
    wall_clock_seconds: float

    @property
    def cv(self) -> CVMetrics:
        return CVMetrics([f.metrics for f in self.folds])

    def mean_accuracy(self) -> float:
        return self.cv.mean("accuracy")

    def to_dict(self) -> dict:
        d = self.cv.to_dict()
        for entry, f in zip(d["folds"], self.folds):
            entry["fold"] = f.fold
            entry["n_train_trials"] = int(len(f.train_trials))
            entry["n_test_trials"] = int(len(f.test_trials))
            entry["final_train_loss"] = f.history[-1]["loss"] if f.history else None
        return {
            "mode": self.config.run.mode,
            "classifier": self.config.run.classifier,
            "seed": self.config.run.seed,
            **d,
            "config": self.config.to_dict(),
            "wall_clock_seconds": self.wall_clock_seconds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _splits(dataset: EEGDataset, cfg: RunConfig) -> list[tuple[np.ndarray, np.ndarray]]:
    if cfg.run.mode == "holdout":
        return [holdout_indices(dataset, cfg.run.train_fraction, cfg.run.seed)]
    plan = stratified_folds(dataset, cfg.run.k, cfg.run.seed)
    return [(plan.train_indices(i), plan.test_indices(i)) for i in range(cfg.run.k)]


def _fit_clmi(filtered, train_idx, test_idx, cfg: RunConfig, fold: int) -> FoldResult:
    pcfg, augment = cfg.preprocess, cfg.run.augment
    train_set = make_window_set(filtered, train_idx, pcfg, augment, cfg.model.dtype)
    test_set = make_window_set(filtered, test_idx, pcfg, augment, cfg.model.dtype)
    # each fold gets its own substream: seed xor fold index
    model = build_model(replace(cfg.model, seed=cfg.model.seed ^ fold))
    hp = replace(cfg.hyper, seed=cfg.hyper.seed ^ fold)
    seen: set[int] = set()
    _, history = train(model, train_set, hp, on_batch=lambda ids: seen.update(ids.tolist()))
    _, metrics = evaluate(model, test_set)
    return FoldResult(fold, metrics, train_idx, test_idx, np.array(sorted(seen), dtype=np.int64), history)


def _fit_csp(dataset, x, train_idx, test_idx, cfg: RunConfig, fold: int) -> FoldResult:
    clf = CSPLDA(m=cfg.run.csp_filters_per_end, n_classes=dataset.n_classes)
    clf.fit(x[train_idx], dataset.labels[train_idx])
    pred = clf.predict(x[test_idx])
    cm = confusion_matrix(dataset.labels[test_idx], pred, dataset.n_classes)
    return FoldResult(fold, Metrics.from_confusion(cm), train_idx, test_idx, np.asarray(train_idx), [])


def run_experiment(dataset: EEGDataset, cfg: RunConfig) -> RunResult:
    """One full cv or holdout run as configured."""
    cfg.validate()
    cfg.check_dataset(dataset)
    t0 = time.perf_counter()
    folds = []
    if cfg.run.classifier == "csp_lda":
        # CSP is itself a learned spatial filter, so it gets bandpassed trials without CAR
        x = bandpass(dataset.trials, cfg.preprocess, dataset.fs)
        for i, (tr, te) in enumerate(_splits(dataset, cfg)):
            folds.append(_fit_csp(dataset, x, tr, te, cfg, i))
    else:
        filtered = filter_dataset(dataset, cfg.preprocess)
        for i, (tr, te) in enumerate(_splits(dataset, cfg)):
            folds.append(_fit_clmi(filtered, tr, te, cfg, i))
    return RunResult(folds, cfg, time.perf_counter() - t0)


def run_cv(dataset: EEGDataset, cfg: RunConfig, k: int | None = None) -> RunResult:
    """Stratified k-fold cross validation (``k`` overrides ``run.k``)."""
    run = replace(cfg.run, mode="cv", k=k or cfg.run.k)
    return run_experiment(dataset, replace(cfg, run=run))


def run_ablation(dataset: EEGDataset, cfg: RunConfig) -> list[tuple[str, RunResult]]:
    """The three convolution x topology variants on identical folds and seeds."""
    rows = []
    for name, model_cfg in build_ablation_suite(cfg.model):
        rows.append((name, run_experiment(dataset, replace(cfg, model=model_cfg))))
    return rows


def sweep_configs(cfg: RunConfig, axis: str, values) -> list[RunConfig]:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    out = []
    for v in values:
        if axis == "lr":
            c = replace(cfg, hyper=replace(cfg.hyper, lr0=float(v)))
        elif axis == "epochs":
            c = replace(cfg, hyper=replace(cfg.hyper, epochs=int(v)))
        else:
            c = replace(cfg, model=replace(cfg.model, lstm_units=int(v)))
        c.validate()
        out.append(c)
    return out


def run_sweep(dataset: EEGDataset, cfg: RunConfig, axis: str, values=None) -> list[tuple[float, RunResult]]:
    """One run per value of ``axis`` (default grid if ``values`` is None) under identical folds/seed."""
    values = SWEEP_GRIDS[axis] if values is None and axis in SWEEP_GRIDS else values
    return [(v, run_experiment(dataset, c)) for v, c in zip(values, sweep_configs(cfg, axis, values))]


def table_rows(rows) -> list[dict]:
    """(key, RunResult) pairs -> plain rows with mean and std of every metric."""
    out = []
    for key, result in rows:
        d = result.cv.to_dict()
        out.append({"key": key, "mean": d["mean"], "std": d["std"], "wall_clock_seconds": result.wall_clock_seconds})
    return out


def format_table(rows, key_name: str) -> str:
    lines = [f"{key_name:<30} {'accuracy':>10} {'std':>8} {'f1_micro':>10} {'f1_macro':>10}"]
    for r in table_rows(rows):
        m, s = r["mean"], r["std"]
        lines.append(f"{str(r['key']):<30} {m['accuracy']:>10.4f} {s['accuracy']:>8.4f} {m['f1_micro']:>10.4f} {m['f1_macro']:>10.4f}")
    return "\n".join(lines)


def trial_features(model: CLMIModel, dataset: EEGDataset, pcfg: PreprocessConfig) -> np.ndarray:
    """Penultimate features, one row per trial, from each trial's first window."""
    filtered = filter_dataset(dataset, pcfg)
    ws = make_window_set(filtered, np.arange(dataset.n_trials), pcfg, augment=False, dtype=model.cfg.dtype)
    return model.extract_features(ws.volumes)


def export_features(model: CLMIModel, dataset: EEGDataset, path, pcfg: PreprocessConfig) -> None:
    """CSV: header ``label,f0,...``, then one row per trial."""
    feats = trial_features(model, dataset, pcfg)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label"] + [f"f{i}" for i in range(feats.shape[1])])
            for label, row in zip(dataset.labels, feats):
                w.writerow([int(label)] + [repr(float(v)) for v in row])
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def train_full(dataset: EEGDataset, cfg: RunConfig) -> tuple[CLMIModel, list[dict]]:
    """Train one model on every trial of ``dataset`` (no held-out part)."""
    cfg.validate()
    cfg.check_dataset(dataset)
    filtered = filter_dataset(dataset, cfg.preprocess)
    ws = make_window_set(filtered, np.arange(dataset.n_trials), cfg.preprocess, cfg.run.augment, cfg.model.dtype)
    model = build_model(cfg.model)
    return train(model, ws, cfg.hyper)


def evaluate_dataset(model: CLMIModel, dataset: EEGDataset, cfg: RunConfig) -> tuple[np.ndarray, Metrics]:
    filtered = filter_dataset(dataset, cfg.preprocess)
    ws = make_window_set(filtered, np.arange(dataset.n_trials), cfg.preprocess, cfg.run.augment, model.cfg.dtype)
    return evaluate(model, ws)


__all__ = [
    "SWEEP_AXES", "SWEEP_GRIDS", "FoldResult", "RunResult",
    "make_window_set", "run_experiment", "run_cv", "run_ablation", "run_sweep", "sweep_configs",
    "table_rows", "format_table", "trial_features", "export_features", "train_full", "evaluate_dataset",
]
