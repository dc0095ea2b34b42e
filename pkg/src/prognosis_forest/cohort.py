"""Patient records, event-file ingestion and contagion-phase partitioning."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .registry import Registry, default_registry

log = logging.getLogger(__name__)

EVENT_HEADER = (
    "patient_id",
    "age",
    "sex",
    "admission_date",
    "outcome",
    "release_day",
    "test",
    "day",
    "value",
)


class ParseError(ValueError):
    """Structural problem with an event file; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class RawOutcome(str, enum.Enum):
    DIED = "died"
    RELEASED = "released"
    TRANSFERRED_HOSPITAL = "transferred_hospital"
    TRANSFERRED_REHAB = "transferred_rehab"


class Label(str, enum.Enum):
    ALIVE = "alive"
    DEAD = "dead"
    EXCLUDED = "excluded"


OUTCOME_LABELS = {
    RawOutcome.DIED: Label.DEAD,
    RawOutcome.RELEASED: Label.ALIVE,
    RawOutcome.TRANSFERRED_REHAB: Label.ALIVE,
    RawOutcome.TRANSFERRED_HOSPITAL: Label.EXCLUDED,
}


def outcome_label(raw: RawOutcome) -> Label:
    return OUTCOME_LABELS[RawOutcome(raw)]


class Phase(str, enum.Enum):
    HCP = "hcp"
    MCP = "mcp"


@dataclass(frozen=True, order=True)
class LabEvent:
    day: int
    test: str
    value: float


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    age: int
    sex: str
    admission_date: dt.date
    stay_length: int
    outcome: RawOutcome
    events: tuple[LabEvent, ...] = ()

    def __post_init__(self):
        if self.sex not in ("M", "F"):
            raise ValueError(f"sex must be M or F, got {self.sex!r}")
        if self.stay_length < 1:
            raise ValueError("stay_length must be >= 1")
        if self.age < 0:
            raise ValueError("age must be >= 0")
        if list(self.events) != sorted(self.events, key=lambda e: (e.day, e.test)):
            raise ValueError("events must be sorted by (day, test)")
        for e in self.events:
            if e.day < 0 or e.day > self.stay_length:
                raise ValueError(f"event day {e.day} outside [0, {self.stay_length}]")

    @property
    def label(self) -> Label:
        return outcome_label(self.outcome)

    @property
    def excluded(self) -> bool:
        return self.label is Label.EXCLUDED

    def findings(self, test: str, up_to_day: int | None = None) -> list[LabEvent]:
        """Events of one test in day order, optionally limited to day <= up_to_day."""
        return [
            e
            for e in self.events
            if e.test == test and (up_to_day is None or e.day <= up_to_day)
        ]


def assign_phase(record: PatientRecord, boundary: dt.date) -> Phase:
    """Admissions strictly before the boundary belong to the high-contagion phase."""
    return Phase.HCP if record.admission_date < boundary else Phase.MCP


def partition_phases(
    records: Iterable[PatientRecord], boundary: dt.date
) -> dict[Phase, list[PatientRecord]]:
    out: dict[Phase, list[PatientRecord]] = {Phase.HCP: [], Phase.MCP: []}
    for r in records:
        if not r.excluded:
            out[assign_phase(r, boundary)].append(r)
    return out


@dataclass
class RowDiagnostic:
    line: int
    reason: str


@dataclass
class IngestResult:
    records: list[PatientRecord]
    rejected: list[RowDiagnostic] = field(default_factory=list)
    warnings: list[RowDiagnostic] = field(default_factory=list)


def _parse_int(text: str, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ValueError(f"{name} is not an integer: {text!r}") from None


def ingest_cohort(source: str | Path, registry: Registry | None = None) -> IngestResult:
    """Read an event CSV into validated patient records.

    Structural problems (bad header, wrong field count, undecodable bytes)
    raise ParseError.  Rows that fail value checks are rejected and reported;
    a row with an empty ``test`` field declares a patient without events.
    """
    registry = registry or default_registry()
    try:
        with open(source, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8 ({exc.reason})", 1) from None
    return ingest_text(text, registry)


def ingest_text(text: str, registry: Registry | None = None) -> IngestResult:
    registry = registry or default_registry()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty file", 1) from None
    except csv.Error as exc:
        raise ParseError(str(exc), 1) from None
    if tuple(h.strip() for h in header) != EVENT_HEADER:
        raise ParseError(f"expected header {','.join(EVENT_HEADER)}", 1)

    patients: dict[str, dict] = {}
    events: dict[str, dict[tuple[str, int], tuple[float, int]]] = {}
    result = IngestResult(records=[])
    line = 1
    while True:
        try:
            row = next(reader)
        except StopIteration:
            break
        except csv.Error as exc:
            raise ParseError(str(exc), reader.line_num) from None
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(EVENT_HEADER):
            raise ParseError(f"expected {len(EVENT_HEADER)} fields, got {len(row)}", line)
        pid, age, sex, adm, outcome, release, test, day, value = (c.strip() for c in row)
        try:
            if not pid:
                raise ValueError("empty patient_id")
            fields = {
                "age": _parse_int(age, "age"),
                "sex": sex,
                "admission_date": dt.date.fromisoformat(adm),
                "outcome": RawOutcome(outcome),
                "stay_length": _parse_int(release, "release_day"),
            }
            if sex not in ("M", "F"):
                raise ValueError(f"sex must be M or F, got {sex!r}")
            if fields["age"] < 0:
                raise ValueError("negative age")
            if fields["stay_length"] < 1:
                raise ValueError("release_day must be >= 1")
            prev = patients.get(pid)
            if prev is not None and prev != fields:
                raise ValueError(f"patient fields conflict with earlier rows for {pid}")
            event = None
            if test or day or value:
                if test not in registry:
                    raise ValueError(f"unknown test id {test!r}")
                d = _parse_int(day, "day")
                v = float(value)
                if d < 0 or d > fields["stay_length"]:
                    raise ValueError(f"day {d} outside [0, {fields['stay_length']}]")
                if not registry[test].admissible(v):
                    raise ValueError(f"{test} value {v} out of admissible range")
                event = (test, d, v)
        except ValueError as exc:
            result.rejected.append(RowDiagnostic(line, str(exc)))
            log.warning("line %d rejected: %s", line, exc)
            continue
        patients.setdefault(pid, fields)
        bucket = events.setdefault(pid, {})
        if event is not None:
            key = event[:2]
            if key in bucket:
                old_value, old_line = bucket[key]
                if old_value == event[2]:
                    msg = f"duplicate row of line {old_line} dropped"
                else:
                    msg = f"conflicting {key[0]} value on day {key[1]} (line {old_line}); last kept"
                result.warnings.append(RowDiagnostic(line, msg))
                log.warning("line %d: %s", line, msg)
            bucket[key] = (event[2], line)

    for pid, fields in patients.items():
        evs = sorted(
            (LabEvent(day=d, test=t, value=v) for (t, d), (v, _) in events[pid].items()),
            key=lambda e: (e.day, e.test),
        )
        result.records.append(PatientRecord(patient_id=pid, events=tuple(evs), **fields))
    return result


def _fmt_value(v: float) -> str:
    return repr(float(v))


def events_to_rows(records: Sequence[PatientRecord]) -> list[list[str]]:
    rows = []
    for r in records:
        head = [
            r.patient_id,
            str(r.age),
            r.sex,
            r.admission_date.isoformat(),
            r.outcome.value,
            str(r.stay_length),
        ]
        if not r.events:
            rows.append(head + ["", "", ""])
        for e in r.events:
            rows.append(head + [e.test, str(e.day), _fmt_value(e.value)])
    return rows


def write_events(records: Sequence[PatientRecord], path: str | Path) -> None:
    """Emit records in the event-file format; ingesting the file gives them back."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_HEADER)
        w.writerows(events_to_rows(records))


def record_to_dict(r: PatientRecord) -> dict:
    return {
        "patient_id": r.patient_id,
        "age": r.age,
        "sex": r.sex,
        "admission_date": r.admission_date.isoformat(),
        "stay_length": r.stay_length,
        "outcome": r.outcome.value,
        "events": [[e.day, e.test, e.value] for e in r.events],
    }


def record_from_dict(d: dict) -> PatientRecord:
    return PatientRecord(
        patient_id=d["patient_id"],
        age=d["age"],
        sex=d["sex"],
        admission_date=dt.date.fromisoformat(d["admission_date"]),
        stay_length=d["stay_length"],
        outcome=RawOutcome(d["outcome"]),
        events=tuple(LabEvent(day=e[0], test=e[1], value=float(e[2])) for e in d["events"]),
    )


@dataclass
class Cohort:
    """Ingested records plus the phase boundary they were partitioned with."""

    records: list[PatientRecord]
    boundary: dt.date
    provenance: dict = field(default_factory=dict)

    def phase_of(self, record: PatientRecord) -> Phase:
        return assign_phase(record, self.boundary)

    def phase_records(self, phase: Phase | str) -> list[PatientRecord]:
        phase = Phase(phase)
        return [r for r in self.records if not r.excluded and self.phase_of(r) is phase]

    def eligible(self) -> list[PatientRecord]:
        return [r for r in self.records if not r.excluded]


def save_cohort(cohort: Cohort, path: str | Path) -> None:
    data = {
        "boundary": cohort.boundary.isoformat(),
        "provenance": cohort.provenance,
        "patients": [
            dict(record_to_dict(r), phase=cohort.phase_of(r).value, label=r.label.value)
            for r in cohort.records
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def load_cohort(path: str | Path) -> Cohort:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return Cohort(
        records=[record_from_dict(p) for p in data["patients"]],
        boundary=dt.date.fromisoformat(data["boundary"]),
        provenance=data.get("provenance", {}),
    )


@dataclass
class PhaseStats:
    n_patients: int
    n_dead: int
    mortality: float
    median_stay: float


@dataclass
class CohortStats:
    n_patients: int
    n_excluded: int
    median_stay: float
    phases: dict[str, PhaseStats]
    test_medians: dict[str, float]


def cohort_stats(records: Sequence[PatientRecord], boundary: dt.date | None = None) -> CohortStats:
    """Mortality and stay medians per phase plus per-test median finding.

    Excluded patients are counted but contribute to no rate or median.
    Without a boundary all eligible patients are reported under ``"all"``.
    """
    if not records:
        raise ValueError("cohort_stats needs a non-empty cohort")
    eligible = [r for r in records if not r.excluded]
    groups: dict[str, list[PatientRecord]] = {"all": eligible}
    if boundary is not None:
        for phase, members in partition_phases(records, boundary).items():
            groups[phase.value] = members
    phases = {}
    for name, members in groups.items():
        n = len(members)
        dead = sum(r.label is Label.DEAD for r in members)
        phases[name] = PhaseStats(
            n_patients=n,
            n_dead=dead,
            mortality=dead / n if n else math.nan,
            median_stay=statistics.median(r.stay_length for r in members) if n else math.nan,
        )
    values: dict[str, list[float]] = {}
    for r in eligible:
        for e in r.events:
            values.setdefault(e.test, []).append(e.value)
    return CohortStats(
        n_patients=len(records),
        n_excluded=len(records) - len(eligible),
        median_stay=statistics.median(r.stay_length for r in eligible) if eligible else math.nan,
        phases=phases,
        test_medians={t: statistics.median(v) for t, v in sorted(values.items())},
    )
