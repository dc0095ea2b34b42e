import math

import numpy as np
import pytest
from conftest import make_record
from hypothesis import given, settings
from hypothesis import strategies as st

from prognosis_forest.registry import TEST_IDS, default_registry
from prognosis_forest.snapshot import (
    DAY_NAMES,
    Trend,
    build_snapshot,
    compute_trend,
    feature_names,
    most_recent_finding,
    start_and_last_trends,
)


def test_latest_finding_before_day():
    r = make_record(events=[(1, "PCR", 40), (5, "PCR", 20)])
    assert most_recent_finding(r, "PCR", 6) == (20, 1)


def test_first_window_takes_oldest():
    r = make_record(events=[(0, "PCR", 40), (1, "PCR", 30)])
    assert most_recent_finding(r, "PCR", 2, first_window_mode=True) == (40, 2)


def test_untested_is_missing():
    assert most_recent_finding(make_record(events=[(0, "PCR", 1)]), "Ferritin", 6) is None


def test_findings_after_snapshot_day_are_ignored():
    r = make_record(events=[(1, "PCR", 40), (7, "PCR", 20)])
    assert most_recent_finding(r, "PCR", 6) == (40, 5)


@pytest.mark.parametrize(
    "v1, v2, trend",
    [(100, 120, Trend.INCREASING), (100, 115, Trend.STABLE), (100, 80, Trend.DECREASING),
     (100, 85, Trend.STABLE), (0, 3, Trend.INCREASING), (0, 0, Trend.STABLE)],
)
def test_compute_trend(v1, v2, trend):
    assert compute_trend(v1, v2, 0.15) is trend


def test_start_and_last_trends():
    r = make_record(events=[(0, "PCR", 10), (3, "PCR", 30), (5, "PCR", 31)])
    assert start_and_last_trends(r, "PCR", 6) == (Trend.INCREASING, Trend.STABLE)
    one = make_record(events=[(0, "PCR", 10)])
    assert start_and_last_trends(one, "PCR", 6) == (Trend.MISSING, Trend.MISSING)
    two = make_record(events=[(0, "PCR", 10), (2, "PCR", 5)])
    start, last = start_and_last_trends(two, "PCR", 6)
    assert start is last is Trend.DECREASING


@pytest.mark.parametrize("day, width", [("2", 12), ("4", 32), ("6", 32), ("8", 32), ("10", 32), ("end", 42)])
def test_feature_width(day, width):
    assert len(feature_names(day)) == width
    snap = build_snapshot(make_record(stay=20), day)
    assert snap.values.shape == (width,)


def test_snapshot_values_and_missing_ageing():
    r = make_record(events=[(0, "PCR", 40), (3, "PCR", 60), (4, "DDimer", 553)], stay=12, sex="F", age=71)
    snap = build_snapshot(r, "6").as_dict()
    assert snap["PCR"] == 60 and snap["PCR_ageing"] == 3 and snap["PCR_start_trend"] == 1
    assert math.isnan(snap["Ferritin"]) and math.isnan(snap["Ferritin_ageing"])
    assert snap["age"] == 71 and snap["sex"] == 0
    cat = build_snapshot(r, "6", "cat").as_dict()
    assert cat["DDimer"] == 2


def test_patient_gone_before_day_has_no_snapshot():
    r = make_record(stay=5)
    assert build_snapshot(r, "4") is not None
    assert build_snapshot(r, "6") is None
    assert build_snapshot(r, "end").snapshot_day == 4


def test_excluded_patient_cannot_be_snapshotted():
    with pytest.raises(ValueError):
        build_snapshot(make_record(outcome="transferred_hospital"), "2")


events = st.lists(
    st.tuples(st.integers(0, 15), st.sampled_from(TEST_IDS), st.floats(0.1, 18)),
    max_size=25,
)


@settings(max_examples=60, deadline=None)
@given(events, st.sampled_from(DAY_NAMES), st.sampled_from(["num", "cat"]))
def test_ageing_is_non_negative_and_paired_with_value(evs, day, form):
    # keep one event per (test, day)
    seen = {(t, d): (d, t, v) for d, t, v in evs}
    r = make_record(events=sorted(seen.values()), stay=16)
    snap = build_snapshot(r, day, form)
    d = snap.as_dict()
    for t in TEST_IDS:
        key = f"{t}_ageing"
        if key in d:
            assert math.isnan(d[key]) == math.isnan(d[t])
            assert math.isnan(d[key]) or d[key] >= 0
    assert len(snap.values) == len(feature_names(day, default_registry()))
