"""Motor-imagery EEG classification: preprocessing, a parallel 3D-CNN / LSTM-attention
network on a small autodiff core, a CSP+LDA baseline, synthetic data and an experiment harness."""
from .data_io import EEGDataset, FoldPlan, holdout_split, read_eegb, stratified_folds, write_eegb
from .model import CLMIModel, ModelConfig, build_ablation_suite, build_model, ci_config
from .preprocess import PreprocessConfig, preprocess_pipeline
from .synthgen import SynthSpec, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "CLMIModel",
    "EEGDataset",
    "FoldPlan",
    "ModelConfig",
    "PreprocessConfig",
    "SynthSpec",
    "build_ablation_suite",
    "build_model",
    "ci_config",
    "generate_dataset",
    "holdout_split",
    "preprocess_pipeline",
    "read_eegb",
    "stratified_folds",
    "write_eegb",
]
