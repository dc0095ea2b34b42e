import datetime as dt

import numpy as np
import pytest
from conftest import make_record

from prognosis_forest.cohort import Cohort
from prognosis_forest.datasets import (
    DEAD,
    TEST,
    TRAIN,
    build_dataset,
    build_day_datasets,
    load_dataset,
    load_split,
    save_dataset,
    save_split,
    split_cohort,
    stratified_split,
)
from prognosis_forest.snapshot import DAY_NAMES
from prognosis_forest.synth import GeneratorSpec, generate

BOUNDARY = dt.date(2020, 3, 21)


def population(n_alive, n_dead):
    recs = [make_record(f"A{i:03d}", [(0, "PCR", 10)]) for i in range(n_alive)]
    recs += [make_record(f"D{i:03d}", [(0, "PCR", 90)], outcome="died") for i in range(n_dead)]
    return recs


def test_split_counts_per_class():
    split = stratified_split(population(100, 20), 0.2, seed=3)
    test = split.ids(TEST)
    assert sum(p.startswith("A") for p in test) == 20
    assert sum(p.startswith("D") for p in test) == 4


def test_split_rounds_half_up():
    split = stratified_split(population(5, 3), 0.5, seed=0)
    test = split.ids(TEST)
    assert sum(p.startswith("A") for p in test) == 3
    assert sum(p.startswith("D") for p in test) == 2


def test_split_is_deterministic_and_fraction_zero():
    recs = population(30, 10)
    assert stratified_split(recs, 0.2, 7) == stratified_split(recs, 0.2, 7)
    assert stratified_split(recs, 0.0, 7).ids(TEST) == set()


def test_split_file_round_trip(tmp_path):
    split = stratified_split(population(10, 5), 0.2, 1)
    save_split(split, tmp_path / "s.csv")
    assert load_split(tmp_path / "s.csv").assignment == split.assignment


@pytest.fixture(scope="module")
def synthetic():
    recs = generate(GeneratorSpec(n_patients=600, seed=11))
    cohort = Cohort(recs, BOUNDARY)
    return cohort, split_cohort(cohort, 0.2, 5)


def test_short_stay_patient_membership():
    recs = [make_record("S", stay=5)] + population(6, 3)
    pairs = {}
    for day in DAY_NAMES:
        pairs[day] = "S" in build_dataset(recs, day).patient_ids
    assert pairs == {"2": True, "4": True, "6": False, "8": False, "10": False, "end": True}


def test_no_patient_crosses_sides(synthetic):
    cohort, split = synthetic
    for phase in ("hcp", "mcp"):
        pairs = build_day_datasets(cohort.phase_records(phase), split, phase)
        train_ids = set().union(*(set(tr.patient_ids) for tr, _ in pairs.values()))
        test_ids = set().union(*(set(te.patient_ids) for _, te in pairs.values()))
        assert train_ids.isdisjoint(test_ids)
        sizes = [len(pairs[d][0]) + len(pairs[d][1]) for d in ("2", "4", "6", "8", "10")]
        assert sizes == sorted(sizes, reverse=True)


def test_split_is_stratified_per_phase(synthetic):
    cohort, split = synthetic
    for phase in ("hcp", "mcp"):
        members = cohort.phase_records(phase)
        dead = [r for r in members if r.label.value == "dead"]
        n_test_dead = sum(split.side(r.patient_id) == TEST for r in dead)
        assert n_test_dead == int(0.2 * len(dead) + 0.5)


def test_dataset_csv_round_trip(tmp_path, synthetic):
    cohort, split = synthetic
    train, _ = build_day_datasets(cohort.phase_records("hcp"), split, "hcp", "cat", ("end",))["end"]
    path = tmp_path / "d.csv"
    save_dataset(train, path)
    back = load_dataset(path)
    assert back.feature_names == train.feature_names
    assert back.patient_ids == train.patient_ids
    np.testing.assert_array_equal(back.labels, train.labels)
    np.testing.assert_array_equal(np.isnan(back.rows), np.isnan(train.rows))
    np.testing.assert_array_equal(np.nan_to_num(back.rows), np.nan_to_num(train.rows))
    assert (back.day, back.phase, back.form, back.side) == ("end", "hcp", "cat", TRAIN)
    assert DEAD in back.labels


def test_missing_split_entries_raise(synthetic):
    cohort, _ = synthetic
    partial = stratified_split(cohort.phase_records("mcp"), 0.2, 0)
    with pytest.raises(ValueError):
        build_day_datasets(cohort.phase_records("hcp"), partial, "hcp")
