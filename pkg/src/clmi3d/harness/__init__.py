"""Training, evaluation, experiment drivers and run configuration."""
from .experiments import (
    SWEEP_AXES,
    SWEEP_GRIDS,
    FoldResult,
    RunResult,
    evaluate_dataset,
    export_features,
    format_table,
    make_window_set,
    run_ablation,
    run_cv,
    run_experiment,
    run_sweep,
    sweep_configs,
    train_full,
    trial_features,
)
from .metrics import CVMetrics, Metrics, accuracy, confusion_matrix, macro_f1, micro_f1
from .runconfig import RunConfig, ci_profile, config_from_dict, load_config, load_dataset, full_profile
from .training import Hyperparams, WindowSet, evaluate, lr_at, train, vote
