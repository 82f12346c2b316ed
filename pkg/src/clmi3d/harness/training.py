"""Mini-batch training with Adam and step learning-rate decay; evaluation."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..autodiff import functional as F
from ..autodiff.optim import Adam
from ..autodiff.tensor import backward
from ..errors import BadConfig, EmptyTestSet, NumericError
from ..model import CLMIModel
from .metrics import Metrics, confusion_matrix

log = logging.getLogger(__name__)


@dataclass
class Hyperparams:
    lr0: float = 1e-3
    lr_decay_factor: float = 0.7  # 30% cut
    lr_decay_every: int = 10
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0

    def validate(self) -> None:
        if not self.lr0 > 0:
            raise BadConfig("lr0 must be positive")
        if not 0 < self.lr_decay_factor <= 1:
            raise BadConfig("lr_decay_factor must lie in (0, 1]")
        if self.lr_decay_every < 1 or self.batch_size < 1 or self.epochs < 0:
            raise BadConfig("lr_decay_every and batch_size must be >= 1, epochs >= 0")


def lr_at(epoch: int, hp: Hyperparams) -> float:
    return hp.lr0 * hp.lr_decay_factor ** (epoch // hp.lr_decay_every)


@dataclass
class WindowSet:
    """Model-ready inputs: (N, H, W, C) volumes, labels, and each window's source trial id."""

    volumes: np.ndarray
    labels: np.ndarray
    source: np.ndarray

    def __len__(self):
        return len(self.labels)


def _batches(order: np.ndarray, size: int) -> list[np.ndarray]:
    batches = [order[s : s + size] for s in range(0, len(order), size)]
    # batchnorm cannot train on a single sample; fold a lone remainder into the previous batch
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def train(
    model: CLMIModel,
    train_set: WindowSet,
    hp: Hyperparams,
    on_batch: Callable[[np.ndarray], None] | None = None,
) -> tuple[CLMIModel, list[dict]]:
    """Train in place. History holds one entry per epoch (lr, mean loss, accuracy).

    ``on_batch`` receives the source-trial ids of every batch before it is used.
    """
    hp.validate()
    history: list[dict] = []
    if hp.epochs == 0:
        return model, history
    if len(train_set) < 2:
        raise EmptyTestSet("need at least two training windows")
    opt = Adam(model.parameters().values(), lr=hp.lr0)
    rng = np.random.default_rng(hp.seed)
    for epoch in range(hp.epochs):
        opt.lr = lr_at(epoch, hp)
        loss_sum, correct = 0.0, 0
        for idx in _batches(rng.permutation(len(train_set)), hp.batch_size):
            if on_batch is not None:
                on_batch(train_set.source[idx])
            labels = train_set.labels[idx]
            logits, _ = model.forward(train_set.volumes[idx], training=True)
            loss = F.cross_entropy(logits, labels)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            backward(loss)
            opt.step()
            loss_sum += value * len(idx)
            correct += int((logits.data.argmax(axis=1) == labels).sum())
        history.append({"epoch": epoch, "lr": opt.lr, "loss": loss_sum / len(train_set), "accuracy": correct / len(train_set)})
        log.debug("epoch %d lr %.3g loss %.4f acc %.3f", epoch, opt.lr, history[-1]["loss"], history[-1]["accuracy"])
    return model, history


def vote(pred: np.ndarray, source: np.ndarray, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Majority vote over windows sharing a source trial; ties go to the lowest class id.

    Returns (trial ids in ascending order, voted class per trial).
    """
    trials, inverse = np.unique(source, return_inverse=True)
    counts = np.zeros((len(trials), n_classes), dtype=np.int64)
    np.add.at(counts, (inverse, pred), 1)
    return trials, counts.argmax(axis=1)


def predict(model: CLMIModel, data: WindowSet) -> np.ndarray:
    """Per-window argmax class (ties to the lowest id)."""
    return model.predict_proba(data.volumes).argmax(axis=1)


def evaluate(model: CLMIModel, test_set: WindowSet) -> tuple[np.ndarray, Metrics]:
    """Trial-level confusion and metrics, voting across each trial's windows."""
    if len(test_set) == 0:
        raise EmptyTestSet("test set is empty")
    k = model.cfg.n_classes
    pred = predict(model, test_set)
    _, voted = vote(pred, test_set.source, k)
    _, first = np.unique(test_set.source, return_index=True)
    truth = test_set.labels[first]
    cm = confusion_matrix(truth, voted, k)
    return cm, Metrics.from_confusion(cm)
