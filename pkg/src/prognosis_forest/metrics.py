"""F-beta, macro F2, ROC-AUC and confusion counts with dead as the positive class."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .datasets import ALIVE, DEAD


def f_beta(precision: float, recall: float, beta: float = 2.0) -> float:
    """Weighted harmonic mean; recall counts beta^2 times as much as precision."""
    b2 = beta * beta
    denom = b2 * precision + recall
    if denom == 0:
        return 0.0
    return (1 + b2) * precision * recall / denom


def class_f_beta(y_true, y_pred, cls: int, beta: float = 2.0) -> float:
    """F-beta of one class from counts; 0 when the class is neither present
    nor predicted (or never predicted correctly)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    tp = int(np.sum((y_pred == cls) & (y_true == cls)))
    fp = int(np.sum((y_pred == cls) & (y_true != cls)))
    fn = int(np.sum((y_pred != cls) & (y_true == cls)))
    if tp == 0:
        return 0.0
    return f_beta(tp / (tp + fp), tp / (tp + fn), beta)


def macro_f_beta(y_true, y_pred, beta: float = 2.0) -> float:
    return (class_f_beta(y_true, y_pred, ALIVE, beta) + class_f_beta(y_true, y_pred, DEAD, beta)) / 2


def macro_f2(y_true, y_pred) -> float:
    return macro_f_beta(y_true, y_pred, 2.0)


def roc_auc(scores, labels) -> float:
    """P(random dead scores above random alive), ties at half credit.

    Computed from average ranks (Mann-Whitney U).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == DEAD
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC-AUC is undefined with a single class")
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return asdict(self)

    def as_grid(self) -> list[list[int]]:
        """Rows true alive/dead, columns predicted alive/dead: correct predictions
        on the diagonal, false positives top-right, false negatives bottom-left."""
        return [[self.tn, self.fp], [self.fn, self.tp]]

    def macro_f2(self) -> float:
        def f(tp, fp, fn):
            return 0.0 if tp == 0 else f_beta(tp / (tp + fp), tp / (tp + fn), 2.0)

        return (f(self.tn, self.fn, self.fp) + f(self.tp, self.fp, self.fn)) / 2


def confusion(y_true, y_pred) -> ConfusionMatrix:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    return ConfusionMatrix(
        tp=int(np.sum((y_pred == DEAD) & (y_true == DEAD))),
        fp=int(np.sum((y_pred == DEAD) & (y_true == ALIVE))),
        fn=int(np.sum((y_pred == ALIVE) & (y_true == DEAD))),
        tn=int(np.sum((y_pred == ALIVE) & (y_true == ALIVE))),
    )
