import csv
import json
import numpy as np
import pytest

from clmi3d.errors import ConfigError
from clmi3d.harness.experiments import (
    SWEEP_GRIDS,
    export_features,
    format_table,
    run_ablation,
    run_cv,
    run_experiment,
    run_sweep,
    sweep_configs,
    train_full,
)
from clmi3d.harness.runconfig import ci_profile, config_from_dict, load_dataset
from clmi3d.model import ABLATION_NAMES


def quick(**overlay):
    raw = {"data": {"synth": {"n_trials_per_class": 10}}, "hyper": {"epochs": 1, "batch_size": 32}}
    for section, values in overlay.items():
        raw.setdefault(section, {}).update(values)
    cfg = config_from_dict(raw, ci_profile())
    return cfg, load_dataset(cfg)


@pytest.fixture(scope="module")
def cv_result():
    cfg, ds = quick()
    return run_cv(ds, cfg, k=5), ds


def test_cv_five_folds_and_mean(cv_result):
    result, ds = cv_result
    assert len(result.folds) == 5
    accs = [f.metrics.accuracy for f in result.folds]
    assert abs(result.mean_accuracy() - sum(accs) / 5) < 1e-12
    for f in result.folds:
        assert f.metrics.confusion.sum() == len(f.test_trials) == 8


def test_cv_test_folds_partition_dataset(cv_result):
    result, ds = cv_result
    tests = np.concatenate([f.test_trials for f in result.folds])
    assert sorted(tests.tolist()) == list(range(ds.n_trials))


def test_no_test_trial_reaches_training(cv_result):
    result, _ = cv_result
    for f in result.folds:
        assert not set(f.seen_trials.tolist()) & set(f.test_trials.tolist())
        assert set(f.seen_trials.tolist()) == set(f.train_trials.tolist())


def test_result_json(cv_result):
    result, _ = cv_result
    doc = json.loads(result.to_json())
    assert doc["mode"] == "cv" and doc["classifier"] == "clmi" and len(doc["folds"]) == 5
    assert doc["mean"]["accuracy"] == result.mean_accuracy()
    assert all(np.array(f["confusion"]).shape == (4, 4) for f in doc["folds"])
    assert "wall_clock_seconds" in doc and doc["config"]["hyper"]["epochs"] == 1


def test_holdout_mode():
    cfg, ds = quick(run={"mode": "holdout"}, hyper={"epochs": 0})
    result = run_experiment(ds, cfg)
    assert len(result.folds) == 1
    assert len(result.folds[0].test_trials) == 8 and len(result.folds[0].train_trials) == 32


def test_csp_classifier_runs():
    cfg, ds = quick(run={"classifier": "csp_lda"})
    result = run_experiment(ds, cfg)
    assert len(result.folds) == 5 and result.mean_accuracy() > 0.5


def test_identical_config_identical_json():
    cfg, ds = quick(run={"mode": "holdout"})
    a, b = run_experiment(ds, cfg).to_dict(), run_experiment(ds, cfg).to_dict()
    a.pop("wall_clock_seconds"), b.pop("wall_clock_seconds")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_ablation_rows_share_folds():
    cfg, ds = quick(run={"mode": "holdout"})
    rows = run_ablation(ds, cfg)
    assert [name for name, _ in rows] == list(ABLATION_NAMES)
    splits = [tuple(r.folds[0].test_trials.tolist()) for _, r in rows]
    assert len(set(splits)) == 1
    assert rows[2][1].config.model == cfg.model
    assert "2D CNN | CNN-LSTM parallel" in format_table(rows, "variant")


@pytest.mark.parametrize("axis", sorted(SWEEP_GRIDS))
def test_sweep_configs_follow_grids(axis):
    cfg = ci_profile()
    configs = sweep_configs(cfg, axis, SWEEP_GRIDS[axis])
    assert len(configs) == 5
    got = {"lr": [c.hyper.lr0 for c in configs], "lstm_units": [c.model.lstm_units for c in configs], "epochs": [c.hyper.epochs for c in configs]}[axis]
    assert got == list(SWEEP_GRIDS[axis])


def test_sweep_grids_values():
    assert SWEEP_GRIDS["lr"] == (0.1, 0.01, 0.001, 0.0001, 0.00001)
    assert SWEEP_GRIDS["lstm_units"] == (64, 128, 256, 512, 1024)
    assert SWEEP_GRIDS["epochs"] == (30, 50, 100, 150, 200)


def test_sweep_runs_values():
    cfg, ds = quick(run={"mode": "holdout"})
    rows = run_sweep(ds, cfg, "epochs", [0, 1])
    assert [v for v, _ in rows] == [0, 1]
    assert [r.config.hyper.epochs for _, r in rows] == [0, 1]


def test_sweep_bad_axis():
    with pytest.raises(ConfigError):
        sweep_configs(ci_profile(), "momentum", [1])
    with pytest.raises(ConfigError):
        sweep_configs(ci_profile(), "lr", [])


def test_export_features(tmp_path):
    cfg, ds = quick(hyper={"epochs": 0})
    model, _ = train_full(ds, cfg)
    export_features(model, ds, tmp_path / "f.csv", cfg.preprocess)
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows[0] == ["label"] + [f"f{i}" for i in range(model.feature_width)]
    assert len(rows) == ds.n_trials + 1
    assert [int(r[0]) for r in rows[1:]] == ds.labels.tolist()
    assert all(len(r) == model.feature_width + 1 for r in rows)
    assert "\r" not in (tmp_path / "f.csv").read_text()


def test_feature_width_default_model():
    from clmi3d.model import build_model
    assert build_model().feature_width == 3328
