import datetime as dt

import numpy as np
import pytest

from prognosis_forest.cohort import LabEvent, PatientRecord, RawOutcome
from prognosis_forest.ensemble import Forest, HyperConfig, Tree

A, D = 0, 1

# four probability pairs (alive, dead) shared by the threshold and evaluation tests
FIXTURE_LABELS = np.array([A, A, D, D])
FIXTURE_PROBA = np.array([[0.9, 0.1], [0.45, 0.55], [0.4, 0.6], [0.05, 0.95]])


def fixture_forest(threshold=None) -> Forest:
    """One-feature tree whose leaves for x = 0, 1, 2, 3 reproduce FIXTURE_PROBA."""
    tree = Tree(
        feature=np.array([0, 0, 0, -1, -1, -1, -1]),
        cut=np.array([1.5, 0.5, 2.5, 0, 0, 0, 0], dtype=float),
        left=np.array([1, 3, 5, -1, -1, -1, -1]),
        right=np.array([2, 4, 6, -1, -1, -1, -1]),
        counts=np.array([[21, 34], [18, 12], [3, 22], [9, 1], [9, 11], [2, 3], [1, 19]]),
    )
    return Forest([tree], HyperConfig(), ["x"], np.zeros(1), threshold=threshold)


def make_record(pid="P1", events=(), stay=10, outcome="released", age=60, sex="M",
                admission=dt.date(2020, 3, 1)) -> PatientRecord:
    return PatientRecord(
        patient_id=pid,
        age=age,
        sex=sex,
        admission_date=admission,
        stay_length=stay,
        outcome=RawOutcome(outcome),
        events=tuple(LabEvent(d, t, float(v)) for d, t, v in events),
    )


@pytest.fixture
def fixture_rows():
    return np.array([[0.0], [1.0], [2.0], [3.0]])
