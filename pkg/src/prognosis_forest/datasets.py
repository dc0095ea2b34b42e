"""Stratified patient splits and per-day train/test datasets."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cohort import Cohort, Label, PatientRecord, Phase
from .registry import Registry, default_registry
from .snapshot import (
    DAY_NAMES,
    DEFAULT_TREND_THRESHOLD,
    FeatureForm,
    build_snapshot,
    day_config,
    feature_names,
)

TRAIN = "train"
TEST = "test"

# class codes used by every model: 0 alive, 1 dead
ALIVE, DEAD = 0, 1


def encode_label(label: Label | str) -> int:
    label = Label(label)
    if label is Label.EXCLUDED:
        raise ValueError("excluded patients carry no class label")
    return DEAD if label is Label.DEAD else ALIVE


def decode_label(code: int) -> str:
    return "dead" if code == DEAD else "alive"


@dataclass
class Dataset:
    feature_names: list[str]
    rows: np.ndarray
    labels: np.ndarray
    patient_ids: list[str]
    day: str | None = None
    phase: str | None = None
    form: str | None = None
    side: str | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.ndim != 2:
            raise ValueError("rows must be a 2-D matrix")
        n = self.rows.shape[0]
        if len(self.labels) != n or len(self.patient_ids) != n:
            raise ValueError("rows, labels and patient_ids must have equal length")
        if self.rows.shape[1] != len(self.feature_names):
            raise ValueError(
                f"row width {self.rows.shape[1]} != {len(self.feature_names)} feature names"
            )
        if n and not np.isin(self.labels, (ALIVE, DEAD)).all():
            raise ValueError("labels must be 0 (alive) or 1 (dead)")

    def __len__(self):
        return self.rows.shape[0]

    @property
    def meta(self) -> dict:
        return {"day": self.day, "phase": self.phase, "form": self.form, "side": self.side}

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(
            feature_names=list(self.feature_names),
            rows=self.rows[index],
            labels=self.labels[index],
            patient_ids=[self.patient_ids[i] for i in index],
            **self.meta,
        )


@dataclass
class SplitAssignment:
    assignment: dict[str, str]
    seed: int | None = None

    def side(self, patient_id: str) -> str:
        return self.assignment[patient_id]

    def ids(self, side: str) -> set[str]:
        return {p for p, s in self.assignment.items() if s == side}

    def merge(self, other: "SplitAssignment") -> "SplitAssignment":
        overlap = self.assignment.keys() & other.assignment.keys()
        if overlap:
            raise ValueError(f"splits overlap on {len(overlap)} patients")
        return SplitAssignment({**self.assignment, **other.assignment}, self.seed)


def _round_half_up(x: Decimal) -> int:
    return int(x.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def stratified_split(
    records: Sequence[PatientRecord], test_fraction: float, seed: int
) -> SplitAssignment:
    """Per-class random partition; each class sends round-half-up(n * fraction) to test."""
    if not 0 <= test_fraction < 1:
        raise ValueError("test_fraction must lie in [0, 1)")
    by_class: dict[int, list[str]] = {ALIVE: [], DEAD: []}
    for r in records:
        if r.excluded:
            continue
        by_class[encode_label(r.label)].append(r.patient_id)
    for code, ids in by_class.items():
        if len(ids) < 2:
            raise ValueError(f"class {decode_label(code)} has {len(ids)} patients; need >= 2")
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate patient ids")
    rng = np.random.default_rng(seed)
    frac = Decimal(str(test_fraction))
    assignment = {}
    for code in (ALIVE, DEAD):
        ids = sorted(by_class[code])
        n_test = _round_half_up(frac * len(ids))
        order = rng.permutation(len(ids))
        for rank, i in enumerate(order):
            assignment[ids[i]] = TEST if rank < n_test else TRAIN
    return SplitAssignment(dict(sorted(assignment.items())), seed)


def split_cohort(cohort: Cohort, test_fraction: float, seed: int) -> SplitAssignment:
    """Stratified split done separately inside each contagion phase."""
    seq = np.random.SeedSequence(seed)
    merged = SplitAssignment({}, seed)
    for phase, child in zip(Phase, seq.spawn(len(Phase))):
        members = cohort.phase_records(phase)
        part = stratified_split(members, test_fraction, int(child.generate_state(1)[0]))
        merged = merged.merge(part)
    return SplitAssignment(dict(sorted(merged.assignment.items())), seed)


def save_split(split: SplitAssignment, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "assignment"])
        for pid, side in sorted(split.assignment.items()):
            w.writerow([pid, side])


def load_split(path: str | Path) -> SplitAssignment:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["patient_id", "assignment"]:
            raise ValueError("split file must have header patient_id,assignment")
        out = {}
        for row in reader:
            if row["assignment"] not in (TRAIN, TEST):
                raise ValueError(f"bad assignment {row['assignment']!r}")
            out[row["patient_id"]] = row["assignment"]
    return SplitAssignment(out)


def build_dataset(
    records: Iterable[PatientRecord],
    day: str,
    form: FeatureForm | str = FeatureForm.NUMERICAL,
    T: float = DEFAULT_TREND_THRESHOLD,
    registry: Registry | None = None,
    **meta,
) -> Dataset:
    """Snapshot every eligible record at ``day``; patients gone by then are skipped."""
    registry = registry or default_registry()
    config = day_config(day)
    names = feature_names(config, registry)
    rows, labels, ids = [], [], []
    for r in records:
        if r.excluded:
            continue
        snap = build_snapshot(r, config, form, T, registry)
        if snap is None:
            continue
        rows.append(snap.values)
        labels.append(encode_label(snap.label))
        ids.append(r.patient_id)
    matrix = np.vstack(rows) if rows else np.empty((0, len(names)))
    return Dataset(names, matrix, labels, ids, day=config.name, form=FeatureForm(form).value, **meta)


def build_day_datasets(
    records: Sequence[PatientRecord],
    split: SplitAssignment,
    phase: Phase | str,
    form: FeatureForm | str = FeatureForm.NUMERICAL,
    day_configs: Sequence[str] = DAY_NAMES,
    T: float = DEFAULT_TREND_THRESHOLD,
    registry: Registry | None = None,
) -> dict[str, tuple[Dataset, Dataset]]:
    """(train, test) pair per day config from one phase's records."""
    phase = Phase(phase)
    eligible = [r for r in records if not r.excluded]
    missing = [r.patient_id for r in eligible if r.patient_id not in split.assignment]
    if missing:
        raise ValueError(f"split does not cover {len(missing)} patients, e.g. {missing[0]}")
    sides = {
        side: [r for r in eligible if split.side(r.patient_id) == side] for side in (TRAIN, TEST)
    }
    out = {}
    for name in day_configs:
        pair = []
        for side in (TRAIN, TEST):
            ds = build_dataset(
                sides[side], name, form, T, registry, phase=phase.value, side=side
            )
            if len(ds) == 0:
                raise ValueError(f"day {name}: empty {side} dataset for phase {phase.value}")
            pair.append(ds)
        out[day_config(name).name] = tuple(pair)
    return out


def _fmt(v: float) -> str:
    v = float(v)
    if math.isnan(v):
        return ""
    if v == int(v) and abs(v) < 2**53:
        return str(int(v))
    return repr(v)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """CSV with patient_id, label and one column per feature; missing is empty.

    The day/phase/form metadata go to a sidecar ``<name>.meta.json``.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "label", *ds.feature_names])
        for pid, lab, row in zip(ds.patient_ids, ds.labels, ds.rows):
            w.writerow([pid, decode_label(lab), *(_fmt(v) for v in row)])
    with open(meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(ds.meta, fh, sort_keys=True)
        fh.write("\n")


def meta_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def load_dataset(path: str | Path, require_labels: bool = True) -> Dataset:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        has_label = len(header) > 1 and header[1] == "label"
        if header[0] != "patient_id" or (require_labels and not has_label):
            raise ValueError(f"{path}: expected leading columns patient_id,label")
        start = 2 if has_label else 1
        names = header[start:]
        ids, labels, rows = [], [], []
        for rec in reader:
            if not rec:
                continue
            ids.append(rec[0])
            labels.append(encode_label(rec[1]) if has_label else ALIVE)
            rows.append([float(v) if v != "" else math.nan for v in rec[start:]])
    meta = {}
    if meta_path(path).is_file():
        with open(meta_path(path), encoding="utf-8") as fh:
            meta = json.load(fh)
    matrix = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    return Dataset(names, matrix, labels, ids, **meta)


def dataset_filename(phase: str, form: str, day: str, side: str) -> str:
    return f"{phase}_{form}_day{day}_{side}.csv"


def concat(datasets: Sequence[Dataset], **meta) -> Dataset:
    names = datasets[0].feature_names
    if any(d.feature_names != names for d in datasets):
        raise ValueError("cannot concatenate datasets with different features")
    return Dataset(
        names,
        np.vstack([d.rows for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        [p for d in datasets for p in d.patient_ids],
        **meta,
    )
