"""Seeded synthetic cohorts with a contagion-phase drift knob.

Families used (documented because outputs must stay seed-stable):

* length of stay: log-normal around a per-phase median, rounded, >= 1 day;
* lab values: log-normal around the panel medians, with a persistent
  per-patient offset, a per-finding noise term and, for deceased patients,
  a per-test shift that grows over the stay (survivors drift slightly back);
* measurement days: first finding on day 0 or soon after, later findings
  separated by 1 + Poisson(mean_gap - 1) days, so tests are irregular and
  values go stale.

Outcomes are drawn first, values conditional on them.  The shift applied to
deceased patients is scaled per phase and weighted per test and phase, so
the value-to-risk relation differs between the two phases as well as the
mortality rate.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cohort import LabEvent, PatientRecord, RawOutcome, write_events

# median finding per test in the reference hospital cohort
PANEL_MEDIANS = {
    "PCR": 34.3,
    "LDH": 280.0,
    "Ferritin": 1030.0,  # male; female uses FERRITIN_FEMALE_MEDIAN
    "TroponinT": 19.0,
    "WBC": 7.1,
    "DDimer": 553.0,
    "Fibrinogen": 442.0,
    "Lymphocyte": 1.0,
    "NeutrophilLymphocyteRatio": 4.9,
    "XRayScore": 8.0,
}
FERRITIN_FEMALE_MEDIAN = 497.0

LOG_SPREAD = {
    "PCR": 0.9,
    "LDH": 0.35,
    "Ferritin": 0.7,
    "TroponinT": 0.7,
    "WBC": 0.35,
    "DDimer": 0.8,
    "Fibrinogen": 0.3,
    "Lymphocyte": 0.45,
    "NeutrophilLymphocyteRatio": 0.55,
    "XRayScore": 0.35,
}

SEVERITY_EFFECT = {
    "PCR": 0.9,
    "LDH": 0.45,
    "Ferritin": 0.35,
    "TroponinT": 0.8,
    "WBC": 0.25,
    "DDimer": 0.7,
    "Fibrinogen": 0.1,
    "Lymphocyte": -0.4,
    "NeutrophilLymphocyteRatio": 0.6,
    "XRayScore": 0.3,
}

# Which tests carry the risk signal differs between phases: inflammation and
# imaging during high contagion, tissue damage and immune markers afterwards.
INFLAMMATION = ("PCR", "Ferritin", "DDimer", "Fibrinogen", "XRayScore")
DAMAGE = ("LDH", "TroponinT", "Lymphocyte", "NeutrophilLymphocyteRatio", "WBC")
PHASE_TEST_WEIGHTS = {
    "hcp": {**{t: 1.6 for t in INFLAMMATION}, **{t: 0.3 for t in DAMAGE}},
    "mcp": {**{t: 0.3 for t in INFLAMMATION}, **{t: 1.6 for t in DAMAGE}},
}

MEAN_GAP_DAYS = {
    "PCR": 1.5,
    "LDH": 2.0,
    "Ferritin": 7.0,
    "TroponinT": 4.0,
    "WBC": 1.5,
    "DDimer": 3.0,
    "Fibrinogen": 4.0,
    "Lymphocyte": 1.5,
    "NeutrophilLymphocyteRatio": 1.5,
    "XRayScore": 3.0,
}

MEASURED_PROB = {
    "PCR": 0.97,
    "LDH": 0.9,
    "Ferritin": 0.55,
    "TroponinT": 0.7,
    "WBC": 0.97,
    "DDimer": 0.75,
    "Fibrinogen": 0.7,
    "Lymphocyte": 0.95,
    "NeutrophilLymphocyteRatio": 0.95,
    "XRayScore": 0.9,
}


@dataclass(frozen=True)
class GeneratorSpec:
    n_patients: int = 2000
    phase_mix: float = 0.5
    drift_factor: float = 2.0
    base_mortality: float = 0.11
    transfer_hospital_rate: float = 0.07
    transfer_rehab_rate: float = 0.04
    stay_median: Mapping[str, float] = field(default_factory=lambda: {"hcp": 8.0, "mcp": 14.0})
    stay_log_sigma: float = 0.6
    hcp_start: str = "2020-02-20"
    boundary: str = "2020-03-21"
    mcp_end: str = "2020-04-30"
    test_frequencies: Mapping[str, float] = field(default_factory=lambda: dict(MEAN_GAP_DAYS))
    measured_prob: Mapping[str, float] = field(default_factory=lambda: dict(MEASURED_PROB))
    severity_effect: Mapping[str, float] = field(default_factory=lambda: dict(SEVERITY_EFFECT))
    # multiplier on the deceased-patient shift per phase
    phase_severity_scale: Mapping[str, float] = field(
        default_factory=lambda: {"hcp": 0.8, "mcp": 1.2}
    )
    # per-phase, per-test multiplier on the shift (missing tests weigh 1)
    phase_test_weights: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: {p: dict(w) for p, w in PHASE_TEST_WEIGHTS.items()}
    )
    # deceased shift = effect * scale * weight * (onset + progression * day / stay)
    severity_onset: float = 0.9
    severity_progression: float = 0.3
    noise_log_sigma: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 0:
            raise ValueError("n_patients must be >= 0")
        if not 0 <= self.phase_mix <= 1:
            raise ValueError("phase_mix must lie in [0, 1]")
        if self.drift_factor < 1:
            raise ValueError("drift_factor must be >= 1")
        if not 0 <= self.base_mortality <= 1:
            raise ValueError("base_mortality must lie in [0, 1]")
        if self.base_mortality * self.drift_factor > 1:
            raise ValueError("base_mortality * drift_factor exceeds 1")
        if not 0 <= self.transfer_hospital_rate < 1 or not 0 <= self.transfer_rehab_rate <= 1:
            raise ValueError("transfer rates must lie in [0, 1)")
        unknown = set(self.severity_effect) - set(PANEL_MEDIANS)
        if unknown:
            raise ValueError(f"unknown tests in severity_effect: {sorted(unknown)}")

    def mortality(self, phase: str) -> float:
        return self.base_mortality * (self.drift_factor if phase == "hcp" else 1.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d))

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown generator fields: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "GeneratorSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _date(text: str) -> dt.date:
    return dt.date.fromisoformat(text)


def _patient(spec: GeneratorSpec, index: int, rng: np.random.Generator) -> PatientRecord:
    phase = "hcp" if rng.random() < spec.phase_mix else "mcp"
    if phase == "hcp":
        first, last = _date(spec.hcp_start), _date(spec.boundary) - dt.timedelta(days=1)
    else:
        first, last = _date(spec.boundary), _date(spec.mcp_end)
    admission = first + dt.timedelta(days=int(rng.integers(0, (last - first).days + 1)))

    u = rng.random()
    if u < spec.transfer_hospital_rate:
        outcome = RawOutcome.TRANSFERRED_HOSPITAL
        dead = False
    elif rng.random() < spec.mortality(phase):
        outcome = RawOutcome.DIED
        dead = True
    else:
        dead = False
        outcome = (
            RawOutcome.TRANSFERRED_REHAB
            if rng.random() < spec.transfer_rehab_rate
            else RawOutcome.RELEASED
        )

    age = int(np.clip(round(rng.normal(76, 9) if dead else rng.normal(64, 14)), 18, 100))
    sex = "M" if rng.random() < (0.68 if dead else 0.6) else "F"
    stay = rng.lognormal(math.log(spec.stay_median[phase]), spec.stay_log_sigma)
    stay = max(1, int(round(stay)))

    scale = spec.phase_severity_scale[phase]
    events = []
    for test, median in PANEL_MEDIANS.items():
        # draw every variate regardless of branch to keep streams aligned
        measured = rng.random() < spec.measured_prob.get(test, 1.0)
        offset = rng.normal(0.0, LOG_SPREAD[test])
        first_day = int(rng.poisson(0.4))
        gap_mean = spec.test_frequencies.get(test, 2.0)
        n_max = stay + 1
        gaps = 1 + rng.poisson(max(gap_mean - 1.0, 0.0), size=n_max)
        noise = rng.normal(0.0, spec.noise_log_sigma, size=n_max)
        if not measured:
            continue
        if test == "Ferritin" and sex == "F":
            median = FERRITIN_FEMALE_MEDIAN
        effect = spec.severity_effect.get(test, 0.0)
        effect *= spec.phase_test_weights.get(phase, {}).get(test, 1.0)
        day = first_day
        k = 0
        while day <= stay:
            progress = day / stay
            if dead:
                shift = effect * scale * (spec.severity_onset + spec.severity_progression * progress)
            else:
                shift = -0.3 * effect * progress
            value = median * math.exp(offset + shift + noise[k])
            if test == "XRayScore":
                value = float(min(18, max(0, round(value))))
            events.append(LabEvent(day=day, test=test, value=float(value)))
            day += int(gaps[k])
            k += 1
    events.sort(key=lambda e: (e.day, e.test))
    return PatientRecord(
        patient_id=f"P{index:05d}",
        age=age,
        sex=sex,
        admission_date=admission,
        stay_length=stay,
        outcome=outcome,
        events=tuple(events),
    )


def generate(spec: GeneratorSpec) -> list[PatientRecord]:
    """Patients drawn independently, each from its own child seed stream."""
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_patients)
    return [_patient(spec, i, np.random.default_rng(c)) for i, c in enumerate(children)]


def inject_sparsity(
    records: Sequence[PatientRecord],
    drop_rate: float | Mapping[str, float],
    seed: int = 0,
    floor: int = 1,
) -> list[PatientRecord]:
    """Randomly drop events, keeping at least ``floor`` events per patient.

    When the draw would leave too few events, dropped ones are restored in
    their original order until the floor is met.
    """
    rates = drop_rate if isinstance(drop_rate, Mapping) else None
    for r in (rates.values() if rates else [drop_rate]):
        if not 0 <= r < 1:
            raise ValueError("drop_rate must lie in [0, 1)")
    children = np.random.SeedSequence(seed).spawn(len(records))
    out = []
    for record, child in zip(records, children):
        rng = np.random.default_rng(child)
        draws = rng.random(len(record.events))
        keep = [
            d >= (rates.get(e.test, 0.0) if rates else drop_rate)
            for d, e in zip(draws, record.events)
        ]
        need = min(floor, len(record.events)) - sum(keep)
        for i in range(len(keep)):
            if need <= 0:
                break
            if not keep[i]:
                keep[i] = True
                need -= 1
        events = tuple(e for e, k in zip(record.events, keep) if k)
        out.append(
            PatientRecord(
                patient_id=record.patient_id,
                age=record.age,
                sex=record.sex,
                admission_date=record.admission_date,
                stay_length=record.stay_length,
                outcome=record.outcome,
                events=events,
            )
        )
    return out


def write_cohort_csv(spec: GeneratorSpec, path: str | Path) -> list[PatientRecord]:
    records = generate(spec)
    write_events(records, path)
    return records
