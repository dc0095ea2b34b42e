"""Reject option: a probability threshold under which predictions are uncertain."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .datasets import decode_label
from .ensemble import Forest, labels_from_proba
from .metrics import macro_f2

UNCERTAIN = "uncertain"

ScoreFn = Callable[[np.ndarray, np.ndarray], float]


@dataclass(frozen=True)
class ThresholdResult:
    threshold: float
    score: float
    rejected_fraction: float  # share with p_max <= threshold
    improved: bool  # False: the no-rejection score was never beaten


def find_uncertain_threshold(
    labels,
    proba,
    max_u: float = 0.25,
    n: int = 100,
    score_fn: ScoreFn = macro_f2,
) -> ThresholdResult:
    """Grid search for the threshold that maximises ``score_fn`` on the kept samples.

    Thresholds min(P_max) + i * delta, i = 0..n-1, with delta spreading the
    range of P_max over n steps.  A sample is kept when its P_max is strictly
    above the candidate.  The scan stops at the first candidate that rejects
    at least ``max_u`` of the samples; only strict improvements replace the
    best (score, threshold).
    """
    y = np.asarray(labels)
    proba = np.asarray(proba, dtype=np.float64)
    if len(y) == 0 or len(y) != len(proba):
        raise ValueError("labels and probabilities must be non-empty and aligned")
    if not 0 < max_u < 1:
        raise ValueError("max_u must lie in (0, 1)")
    if n < 1:
        raise ValueError("n must be >= 1")
    pred = labels_from_proba(proba)
    p_max = proba.max(axis=1)
    lo = float(p_max.min())
    hi = float(p_max.max())
    delta = (hi - lo) / n
    v = score_fn(y, pred)
    th = lo
    improved = False
    total = len(p_max)
    for i in range(n):
        th_i = lo + i * delta
        keep = p_max > th_i
        u = 1 - keep.sum() / total
        if u >= max_u:
            break
        v_i = score_fn(y[keep], pred[keep])
        if v_i > v:
            th, v, improved = th_i, v_i, True
        if delta == 0:
            break
    return ThresholdResult(
        threshold=th,
        score=v,
        rejected_fraction=float(np.mean(p_max <= th)),
        improved=improved,
    )


@dataclass(frozen=True)
class TriagePrediction:
    label: str  # alive, dead or uncertain
    p_alive: float
    p_dead: float

    @property
    def p_max(self) -> float:
        return max(self.p_alive, self.p_dead)


def triage_codes(proba: np.ndarray, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """(argmax class codes, uncertain mask) for probability pairs."""
    proba = np.asarray(proba, dtype=np.float64)
    return labels_from_proba(proba), proba.max(axis=1) <= threshold


def apply_threshold(forest: Forest, rows) -> list[TriagePrediction]:
    if forest.threshold is None:
        raise ValueError(
            "model has no uncertainty threshold; train it with threshold optimisation"
        )
    proba = forest.predict_proba(rows)
    codes, uncertain = triage_codes(proba, forest.threshold)
    return [
        TriagePrediction(UNCERTAIN if unc else decode_label(c), float(p[0]), float(p[1]))
        for c, unc, p in zip(codes, uncertain, proba)
    ]
