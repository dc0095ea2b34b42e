import numpy as np
import pytest
from conftest import FIXTURE_LABELS, FIXTURE_PROBA, fixture_forest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import threshold_grid_oracle

from prognosis_forest.metrics import macro_f2
from prognosis_forest.uncertainty import apply_threshold, find_uncertain_threshold, triage_codes


def test_four_sample_hand_trace():
    res = find_uncertain_threshold(FIXTURE_LABELS, FIXTURE_PROBA, max_u=0.3, n=10)
    assert res.score == 1.0
    assert res.threshold == pytest.approx(0.55)
    assert res.rejected_fraction == 0.25 and res.improved


def test_all_correct_keeps_base_score_and_lowest_threshold():
    proba = np.array([[0.8, 0.2], [0.3, 0.7], [0.9, 0.1], [0.45, 0.55]])
    res = find_uncertain_threshold([0, 1, 0, 1], proba, 0.25, 20)
    assert (res.score, res.threshold, res.improved) == (1.0, 0.55, False)


def test_tiny_cap_returns_at_first_rejection():
    labels = FIXTURE_LABELS
    res = find_uncertain_threshold(labels, FIXTURE_PROBA, max_u=0.2, n=10)
    assert res.threshold == 0.55
    assert res.score == pytest.approx(macro_f2(labels, [0, 1, 1, 1]))
    assert not res.improved


def test_matches_exhaustive_grid_oracle():
    rng = np.random.default_rng(12)
    for _ in range(1000):
        m = int(rng.integers(1, 201))
        n = int(rng.integers(1, 1001))
        p_dead = rng.random(m)
        if rng.random() < 0.3:
            p_dead = np.round(p_dead * 8) / 8
        proba = np.column_stack([1 - p_dead, p_dead])
        labels = rng.integers(0, 2, m)
        max_u = float(rng.uniform(0.01, 0.99))
        res = find_uncertain_threshold(labels, proba, max_u, n)
        assert (res.score, res.threshold) == threshold_grid_oracle(labels, proba, max_u, n)


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 1), st.floats(0, 1)), min_size=2, max_size=60),
    st.floats(0.05, 0.6),
)
def test_improved_threshold_respects_cap(rows, max_u):
    labels = np.array([r[0] for r in rows])
    p = np.array([r[1] for r in rows])
    proba = np.column_stack([1 - p, p])
    res = find_uncertain_threshold(labels, proba, max_u, 50)
    base = macro_f2(labels, np.where(p >= 1 - p, 1, 0))
    assert res.score >= base
    if res.improved:
        assert res.rejected_fraction < max_u


def test_triage():
    codes, unc = triage_codes(np.array([[0.35, 0.65], [0.1, 0.9], [0.5, 0.5], [0.49, 0.51]]), 0.7)
    assert list(unc) == [True, False, True, True]
    assert codes[1] == 1
    _, unc = triage_codes(np.array([[0.5, 0.5], [0.49, 0.51], [0.9, 0.1]]), 0.5)
    assert list(unc) == [True, False, False]


def test_apply_threshold_labels(fixture_rows):
    preds = apply_threshold(fixture_forest(threshold=0.55), fixture_rows)
    assert [p.label for p in preds] == ["alive", "uncertain", "dead", "dead"]
    with pytest.raises(ValueError):
        apply_threshold(fixture_forest(), fixture_rows)
