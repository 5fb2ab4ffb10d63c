"""Per-class precision / recall / F1 with macro averages and a confusion matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def f1_score(precision: float, recall: float) -> float:
    if precision + recall <= 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    """Classification metrics for labels ``0 .. class_count-1``.

    ``confusion[i, j]`` counts items of true class ``i`` predicted as ``j``.
    The macro entries are unweighted means over classes; ``macro_precision``
    is what the detection tables call mAP.
    """

    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    confusion: np.ndarray

    @property
    def macro_precision(self) -> float:
        return float(np.mean(self.precision))

    @property
    def macro_recall(self) -> float:
        return float(np.mean(self.recall))

    @property
    def macro_f1(self) -> float:
        return float(np.mean(self.f1))

    @property
    def accuracy(self) -> float:
        total = self.confusion.sum()
        return float(np.trace(self.confusion) / total) if total else 0.0


def confusion_matrix(predicted, truth, class_count: int) -> np.ndarray:
    predicted = np.asarray(predicted, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(cm, (truth, predicted), 1)
    return cm


def compute_metrics(predicted, truth, class_count: int) -> MetricsReport:
    if len(predicted) != len(truth):
        raise ValueError("predicted and truth differ in length")
    cm = confusion_matrix(predicted, truth, class_count)
    tp = np.diag(cm).astype(np.float64)
    pred_pos = cm.sum(axis=0)
    support = cm.sum(axis=1)
    precision = np.divide(tp, pred_pos, out=np.zeros(class_count), where=pred_pos > 0)
    recall = np.divide(tp, support, out=np.zeros(class_count), where=support > 0)
    f1 = np.array([f1_score(p, r) for p, r in zip(precision, recall)])
    return MetricsReport(precision, recall, f1, support, cm)
