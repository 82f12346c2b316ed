"""Confusion matrices and accuracy / precision / recall / F1.

Micro averaging sums TP, FP and FN over classes before forming the ratios.
For single-label multiclass predictions every error is one FP (for the
predicted class) and one FN (for the true class), so micro precision,
micro recall and micro F1 all equal accuracy. Macro F1 is reported as well
because it is the usual source of an F1 that differs from accuracy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyTestSet


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Rows are true classes, columns predicted."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den else 0.0


def accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    if total == 0:
        raise EmptyTestSet("confusion matrix is empty")
    return _ratio(np.trace(cm), total)


def micro_counts(cm: np.ndarray) -> tuple[int, int, int]:
    tp = int(np.trace(cm))
    off = int(cm.sum()) - tp
    return tp, off, off


def micro_precision(cm: np.ndarray) -> float:
    tp, fp, _ = micro_counts(cm)
    return _ratio(tp, tp + fp)


def micro_recall(cm: np.ndarray) -> float:
    tp, _, fn = micro_counts(cm)
    return _ratio(tp, tp + fn)


def f1(precision: float, recall: float) -> float:
    return _ratio(2 * precision * recall, precision + recall)


def micro_f1(cm: np.ndarray) -> float:
    if cm.sum() == 0:
        raise EmptyTestSet("confusion matrix is empty")
    return f1(micro_precision(cm), micro_recall(cm))


def macro_f1(cm: np.ndarray) -> float:
    tp = np.diag(cm).astype(float)
    pred = cm.sum(axis=0)
    true = cm.sum(axis=1)
    scores = [f1(_ratio(tp[c], pred[c]), _ratio(tp[c], true[c])) for c in range(len(cm)) if true[c] or pred[c]]
    return float(np.mean(scores)) if scores else 0.0


@dataclass
class Metrics:
    accuracy: float
    precision_micro: float
    recall_micro: float
    f1_micro: float
    f1_macro: float
    confusion: np.ndarray = field(repr=False)

    @classmethod
    def from_confusion(cls, cm: np.ndarray) -> "Metrics":
        cm = np.asarray(cm, dtype=np.int64)
        return cls(accuracy(cm), micro_precision(cm), micro_recall(cm), micro_f1(cm), macro_f1(cm), cm)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision_micro": self.precision_micro,
            "recall_micro": self.recall_micro,
            "f1_micro": self.f1_micro,
            "f1_macro": self.f1_macro,
            "confusion": self.confusion.tolist(),
        }


METRIC_KEYS = ("accuracy", "precision_micro", "recall_micro", "f1_micro", "f1_macro")


@dataclass
class CVMetrics:
    folds: list[Metrics]

    def _values(self, key: str) -> np.ndarray:
        return np.array([getattr(m, key) for m in self.folds])

    def mean(self, key: str = "accuracy") -> float:
        return float(self._values(key).mean())

    def std(self, key: str = "accuracy") -> float:
        return float(self._values(key).std())

    def to_dict(self) -> dict:
        return {
            "folds": [m.to_dict() for m in self.folds],
            "mean": {k: self.mean(k) for k in METRIC_KEYS},
            "std": {k: self.std(k) for k in METRIC_KEYS},
        }
