"""Discrimination and calibration metrics for binary risk predictions."""

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from ._validation import check_labels, check_probs
from .exceptions import EmptyInput


def auc(labels, preds):
    """Area under the ROC curve as the Mann-Whitney statistic.

    Tied (positive, negative) score pairs count one half.
    """
    y = check_labels(labels)
    p = check_probs(preds, len(y))
    ranks = rankdata(p)
    n1 = int(y.sum())
    n0 = len(y) - n1
    u = ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n0 * n1))


def brier_per_class(labels, preds):
    """Brier score computed separately within each class: ``(bs0, bs1)``."""
    y = check_labels(labels)
    p = check_probs(preds, len(y))
    bs0 = float(np.mean(p[y == 0] ** 2))
    bs1 = float(np.mean((1.0 - p[y == 1]) ** 2))
    return bs0, bs1


def brier_overall(labels, preds):
    y = check_labels(labels, both_classes=False)
    p = check_probs(preds, len(y))
    if y.size == 0:
        raise EmptyInput("no predictions")
    return float(np.mean((y - p) ** 2))


def threshold_classify(preds, cutoff=0.5):
    p = check_probs(preds)
    return (p >= cutoff).astype(np.int64)


@dataclass(frozen=True)
class EvaluationReport:
    auc: float
    brier0: float
    brier1: float
    n0: int
    n1: int

    @property
    def brier_gap(self):
        return abs(self.brier1 - self.brier0)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("auc", "brier0", "brier1", "n0", "n1")})


def evaluate(labels, preds):
    y = check_labels(labels)
    bs0, bs1 = brier_per_class(y, preds)
    n1 = int(y.sum())
    return EvaluationReport(auc(y, preds), bs0, bs1, len(y) - n1, n1)
