"""Patient snapshots: most recent findings with ageing and trend features."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .cohort import Label, PatientRecord
from .registry import LabTestKind, Registry, default_registry

DEFAULT_TREND_THRESHOLD = 0.15


class FeatureForm(str, enum.Enum):
    NUMERICAL = "num"
    CATEGORICAL = "cat"


class Trend(enum.Enum):
    INCREASING = 1
    STABLE = 0
    DECREASING = -1
    MISSING = None

    def encode(self) -> float:
        return math.nan if self is Trend.MISSING else float(self.value)


@dataclass(frozen=True)
class DayConfig:
    name: str
    day: int | None  # None: the last day before release
    first_window: bool = False
    ageing: bool = True
    start_trend: bool = False
    last_trend: bool = False

    def snapshot_day(self, record: PatientRecord) -> int:
        return record.stay_length - 1 if self.day is None else self.day

    def includes(self, record: PatientRecord) -> bool:
        return self.day is None or record.stay_length > self.day


DAY_CONFIGS = {
    "2": DayConfig("2", 2, first_window=True, ageing=False),
    "4": DayConfig("4", 4, start_trend=True),
    "6": DayConfig("6", 6, start_trend=True),
    "8": DayConfig("8", 8, last_trend=True),
    "10": DayConfig("10", 10, last_trend=True),
    "end": DayConfig("end", None, start_trend=True, last_trend=True),
}
DAY_NAMES = tuple(DAY_CONFIGS)


def day_config(name: str | int | DayConfig) -> DayConfig:
    if isinstance(name, DayConfig):
        return name
    try:
        return DAY_CONFIGS[str(name)]
    except KeyError:
        raise ValueError(f"unknown day config {name!r}; expected one of {DAY_NAMES}") from None


def most_recent_finding(
    record: PatientRecord, test: str, day: int, first_window_mode: bool = False
) -> tuple[float, int] | None:
    """(value, ageing) of the finding used at ``day``, or None if untested.

    The latest finding with event day <= day, or the earliest one in
    first-window mode.
    """
    if day < 0:
        raise ValueError("day must be >= 0")
    found = record.findings(test, day)
    if not found:
        return None
    e = found[0] if first_window_mode else found[-1]
    return e.value, day - e.day


@lru_cache(maxsize=16)
def _band(T: float) -> Fraction:
    # T as written (0.15, not its binary neighbour), so 115 vs 100 sits on the edge
    return Fraction(str(T))


def compute_trend(v1: float, v2: float, T: float = DEFAULT_TREND_THRESHOLD) -> Trend:
    """Direction from the earlier value v1 to the later v2 with a +-T dead band.

    Compared in exact arithmetic: the band edges (1 +- T) * v1 are stable.
    """
    if not 0 < T < 1:
        raise ValueError("T must lie in (0, 1)")
    if v1 == 0:
        return Trend.INCREASING if v2 > 0 else Trend.STABLE
    t = _band(T)
    a, b = Fraction(v1), Fraction(v2)
    if b > (1 + t) * a:
        return Trend.INCREASING
    if b < (1 - t) * a:
        return Trend.DECREASING
    return Trend.STABLE


def start_and_last_trends(
    record: PatientRecord, test: str, day: int, T: float = DEFAULT_TREND_THRESHOLD
) -> tuple[Trend, Trend]:
    found = record.findings(test, day)
    if len(found) < 2:
        return Trend.MISSING, Trend.MISSING
    start = compute_trend(found[0].value, found[-1].value, T)
    last = compute_trend(found[-2].value, found[-1].value, T)
    return start, last


def categorize(value: float | None, test: LabTestKind, sex: str | None = None) -> int | None:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    return test.categorize(value, sex)


def feature_names(config: DayConfig | str, registry: Registry | None = None) -> list[str]:
    config = day_config(config)
    registry = registry or default_registry()
    names = []
    for t in registry.ids:
        names.append(t)
        if config.ageing:
            names.append(f"{t}_ageing")
        if config.start_trend:
            names.append(f"{t}_start_trend")
        if config.last_trend:
            names.append(f"{t}_last_trend")
    return names + ["age", "sex"]


@dataclass(frozen=True)
class Snapshot:
    patient_id: str
    snapshot_day: int
    feature_names: tuple[str, ...]
    values: np.ndarray  # NaN marks a missing feature
    label: Label

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.feature_names, self.values.tolist()))


class ExcludedPatientError(ValueError):
    pass


def build_snapshot(
    record: PatientRecord,
    config: DayConfig | str,
    form: FeatureForm | str = FeatureForm.NUMERICAL,
    T: float = DEFAULT_TREND_THRESHOLD,
    registry: Registry | None = None,
) -> Snapshot | None:
    """Feature vector of ``record`` at the configured day.

    Returns None when the patient left before the snapshot day.
    """
    config = day_config(config)
    form = FeatureForm(form)
    registry = registry or default_registry()
    if record.excluded:
        raise ExcludedPatientError(f"patient {record.patient_id} is excluded from datasets")
    if not config.includes(record):
        return None
    day = config.snapshot_day(record)
    row: list[float] = []
    for test in registry:
        found = most_recent_finding(record, test.id, day, config.first_window)
        if found is None:
            value, ageing = math.nan, math.nan
        else:
            value, ageing = found
            if form is FeatureForm.CATEGORICAL:
                value = float(test.categorize(value, record.sex))
        row.append(value)
        if config.ageing:
            row.append(float(ageing))
        if config.start_trend or config.last_trend:
            start, last = start_and_last_trends(record, test.id, day, T)
            if config.start_trend:
                row.append(start.encode())
            if config.last_trend:
                row.append(last.encode())
    row.append(float(record.age))
    row.append(1.0 if record.sex == "M" else 0.0)
    return Snapshot(
        patient_id=record.patient_id,
        snapshot_day=day,
        feature_names=tuple(feature_names(config, registry)),
        values=np.array(row, dtype=np.float64),
        label=record.label,
    )
