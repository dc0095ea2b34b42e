"""Random hyperparameter search with stratified k-fold CV and per-fold thresholds."""

from __future__ import annotations

import csv
import logging
import multiprocessing as mp
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .datasets import ALIVE, DEAD, Dataset
from .ensemble import ET, IMPUTATIONS, RF, FitError, Forest, HyperConfig, fit
from .metrics import macro_f2
from .uncertainty import ScoreFn, find_uncertain_threshold

log = logging.getLogger(__name__)

DEPTH_CHOICES: tuple[int | None, ...] = (*range(3, 21), None)


@dataclass(frozen=True)
class SearchSpace:
    """Ranges are inclusive (lo, hi); ``max_features`` hi of None means the width."""

    kinds: tuple[str, ...] = (RF, ET)
    n_trees: tuple[int, int] = (10, 100)
    max_depth: tuple[int | None, ...] = DEPTH_CHOICES
    min_samples_leaf: tuple[int, int] = (1, 10)
    max_features: tuple[int, int | None] = (1, None)
    bootstrap: tuple[bool, ...] = (True, False)
    imputation: tuple[str, ...] = IMPUTATIONS

    def to_dict(self) -> dict:
        return {
            "kinds": list(self.kinds),
            "n_trees": list(self.n_trees),
            "max_depth": list(self.max_depth),
            "min_samples_leaf": list(self.min_samples_leaf),
            "max_features": list(self.max_features),
            "bootstrap": list(self.bootstrap),
            "imputation": list(self.imputation),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        kw = {}
        for key, value in d.items():
            kw[key] = tuple(value)
        return cls(**kw)


WIDE_SPACE = SearchSpace(n_trees=(50, 500))


def sample_config(space: SearchSpace, rng: np.random.Generator, width: int) -> HyperConfig:
    """Independent uniform draw of every hyperparameter."""

    def pick(options):
        return options[int(rng.integers(len(options)))]

    def between(lo, hi):
        return int(rng.integers(lo, hi + 1))

    k_lo, k_hi = space.max_features
    k_hi = width if k_hi is None else min(k_hi, width)
    return HyperConfig(
        ensemble_kind=pick(space.kinds),
        n_trees=between(*space.n_trees),
        max_depth=pick(space.max_depth),
        min_samples_leaf=between(*space.min_samples_leaf),
        max_features=between(min(k_lo, k_hi), k_hi),
        bootstrap=bool(pick(space.bootstrap)),
        imputation=pick(space.imputation),
        seed=int(rng.integers(0, 2**31 - 1)),
    )


@dataclass(frozen=True)
class SearchSpec:
    n_configs: int = 4096
    k_folds: int | str = "auto"
    max_u: float = 0.25
    n_thresholds: int = 100
    seed: int = 0
    space: SearchSpace = field(default_factory=SearchSpace)
    fold_cutoff: int = 600

    def __post_init__(self):
        if self.n_configs < 1:
            raise ValueError("n_configs must be >= 1")
        if not 0 < self.max_u < 1:
            raise ValueError("max_u must lie in (0, 1)")
        if self.k_folds != "auto" and int(self.k_folds) < 2:
            raise ValueError("k_folds must be 'auto' or >= 2")

    def folds_for(self, n_rows: int) -> int:
        if self.k_folds == "auto":
            return 10 if n_rows >= self.fold_cutoff else 5
        return int(self.k_folds)


def stratified_kfold(labels, k: int, seed: int) -> list[np.ndarray]:
    """k disjoint validation index sets with per-class counts differing by at most one.

    Each class is shuffled and dealt in contiguous chunks, the remainder
    going to the first folds.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (ALIVE, DEAD):
        members = np.flatnonzero(labels == cls)
        if len(members) < k:
            raise ValueError(f"class {cls} has {len(members)} samples, fewer than k={k}")
        members = members[rng.permutation(len(members))]
        for fold, chunk in zip(folds, np.array_split(members, k)):
            fold.extend(chunk.tolist())
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class CVResult:
    mean_score: float
    mean_threshold: float
    fold_scores: list[float]
    fold_thresholds: list[float]


def cross_validate(
    dataset: Dataset,
    config: HyperConfig,
    folds: Sequence[np.ndarray] | int,
    max_u: float = 0.25,
    n_thresholds: int = 100,
    score_fn: ScoreFn = macro_f2,
    seed: int = 0,
    fit_fn: Callable[[Dataset, HyperConfig], Forest] = fit,
) -> CVResult:
    """Fit on k-1 folds, optimise the reject threshold on the held-out fold.

    ``folds`` is either precomputed validation index sets or a fold count.
    Raises FitError when a fold's training side cannot be fitted.
    """
    if isinstance(folds, (int, np.integer)):
        folds = stratified_kfold(dataset.labels, int(folds), seed)
    n = len(dataset)
    scores, thresholds = [], []
    for valid in folds:
        train_mask = np.ones(n, dtype=bool)
        train_mask[valid] = False
        model = fit_fn(dataset.subset(np.flatnonzero(train_mask)), config)
        proba = model.predict_proba(dataset.rows[valid])
        res = find_uncertain_threshold(
            dataset.labels[valid], proba, max_u, n_thresholds, score_fn
        )
        scores.append(float(res.score))
        thresholds.append(float(res.threshold))
    return CVResult(
        mean_score=float(np.mean(scores)),
        mean_threshold=float(np.mean(thresholds)),
        fold_scores=scores,
        fold_thresholds=thresholds,
    )


@dataclass
class LogEntry:
    index: int
    config: HyperConfig
    cv: CVResult


@dataclass
class SearchResult:
    best_config: HyperConfig
    best_score: float
    best_threshold: float
    log: list[LogEntry]
    n_failed: int
    k_folds: int
    forest: Forest | None = None

    @property
    def best_entry(self) -> LogEntry:
        return best_entry(self.log)


def best_entry(entries: Sequence[LogEntry], kind: str | None = None) -> LogEntry | None:
    """Highest mean score; earliest draw wins ties."""
    best = None
    for e in entries:
        if kind is not None and e.config.ensemble_kind != kind:
            continue
        if best is None or e.cv.mean_score > best.cv.mean_score:
            best = e
    return best


def config_for_index(spec: SearchSpec, index: int, width: int) -> HyperConfig:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1, index]))
    return sample_config(spec.space, rng, width)


def fold_seed(spec: SearchSpec) -> int:
    return int(np.random.SeedSequence([spec.seed, 0]).generate_state(1)[0])


# per-process state for the worker pool
_WORKER: dict = {}


def _init_worker(dataset, folds, spec):
    _WORKER.update(dataset=dataset, folds=folds, spec=spec)


def _evaluate(index: int):
    ds, folds, spec = _WORKER["dataset"], _WORKER["folds"], _WORKER["spec"]
    config = config_for_index(spec, index, ds.rows.shape[1])
    try:
        cv = cross_validate(ds, config, folds, spec.max_u, spec.n_thresholds)
    except FitError as exc:
        return index, config, None, str(exc)
    return index, config, cv, None


def random_search(
    dataset: Dataset, spec: SearchSpec, threads: int = 1, refit: bool = True
) -> SearchResult:
    """Evaluate ``spec.n_configs`` sampled configs and keep the best mean score.

    Configs derive their randomness from (seed, index), so the outcome does
    not depend on ``threads``.  With ``refit`` the winner is retrained on the
    whole dataset and carries the fold-averaged threshold.
    """
    k = spec.folds_for(len(dataset))
    folds = stratified_kfold(dataset.labels, k, fold_seed(spec))
    indices = range(spec.n_configs)
    if threads > 1 and spec.n_configs > 1:
        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(
            max_workers=threads,
            mp_context=ctx,
            initializer=_init_worker,
            initargs=(dataset, folds, spec),
        ) as pool:
            outcomes = list(pool.map(_evaluate, indices, chunksize=1))
    else:
        _init_worker(dataset, folds, spec)
        try:
            outcomes = [_evaluate(i) for i in indices]
        finally:
            _WORKER.clear()

    entries = []
    failed = 0
    for index, config, cv, error in outcomes:
        if cv is None:
            failed += 1
            log.warning("config %d failed: %s", index, error)
            continue
        entries.append(LogEntry(index, config, cv))
    if not entries:
        raise RuntimeError(f"all {spec.n_configs} configurations failed")
    winner = best_entry(entries)
    result = SearchResult(
        best_config=winner.config,
        best_score=winner.cv.mean_score,
        best_threshold=winner.cv.mean_threshold,
        log=entries,
        n_failed=failed,
        k_folds=k,
    )
    if refit:
        result.forest = refit_with_threshold(dataset, winner)
    return result


def refit_with_threshold(dataset: Dataset, entry: LogEntry) -> Forest:
    forest = fit(dataset, entry.config)
    return replace(forest, threshold=entry.cv.mean_threshold)


LOG_PARAMS = (
    "ensemble_kind",
    "n_trees",
    "max_depth",
    "min_samples_leaf",
    "max_features",
    "bootstrap",
    "imputation",
    "split_measure",
    "seed",
)


def write_search_log(result: SearchResult, path: str | Path) -> None:
    k = result.k_folds
    header = ["index", *LOG_PARAMS]
    header += [f"score_fold{i}" for i in range(k)] + [f"threshold_fold{i}" for i in range(k)]
    header += ["mean_score", "mean_threshold"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for e in result.log:
            c = e.config.to_dict()
            params = ["" if c[p] is None else c[p] for p in LOG_PARAMS]
            w.writerow(
                [e.index, *params]
                + [repr(s) for s in e.cv.fold_scores]
                + [repr(t) for t in e.cv.fold_thresholds]
                + [repr(e.cv.mean_score), repr(e.cv.mean_threshold)]
            )


def read_search_log(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
