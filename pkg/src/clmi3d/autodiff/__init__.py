"""Minimal reverse-mode autodiff over numpy arrays, with the layers the
CNN/LSTM network needs and an Adam optimizer."""
from . import functional
from .checkpoint import load_arrays, save_arrays
from .layers import LSTM, AttentionPool, BatchNorm, Conv3d, Dense, Dropout, MultiScaleConv3d
from .optim import Adam, adam_step
from .tensor import Parameter, Tensor, backward, no_grad

__all__ = [
    "Adam",
    "AttentionPool",
    "BatchNorm",
    "Conv3d",
    "Dense",
    "Dropout",
    "LSTM",
    "MultiScaleConv3d",
    "Parameter",
    "Tensor",
    "adam_step",
    "backward",
    "functional",
    "load_arrays",
    "no_grad",
    "save_arrays",
]
