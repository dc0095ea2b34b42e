import datetime as dt

import pytest
from conftest import make_record

from prognosis_forest.cohort import (
    EVENT_HEADER,
    Cohort,
    Label,
    ParseError,
    Phase,
    RawOutcome,
    assign_phase,
    cohort_stats,
    ingest_text,
    load_cohort,
    outcome_label,
    save_cohort,
    write_events,
)

HEADER = ",".join(EVENT_HEADER)
BOUNDARY = dt.date(2020, 3, 21)


def rows(*lines):
    return "\n".join([HEADER, *lines]) + "\n"


@pytest.mark.parametrize(
    "raw, label",
    [
        (RawOutcome.DIED, Label.DEAD),
        (RawOutcome.RELEASED, Label.ALIVE),
        (RawOutcome.TRANSFERRED_REHAB, Label.ALIVE),
        (RawOutcome.TRANSFERRED_HOSPITAL, Label.EXCLUDED),
    ],
)
def test_outcome_labels(raw, label):
    assert outcome_label(raw) is label


def test_three_pcr_events_one_record():
    text = rows(
        "P1,70,M,2020-03-01,died,9,PCR,0,40",
        "P1,70,M,2020-03-01,died,9,PCR,2,55.5",
        "P1,70,M,2020-03-01,died,9,PCR,5,80",
    )
    res = ingest_text(text)
    assert len(res.records) == 1
    rec = res.records[0]
    assert [e.day for e in rec.events] == [0, 2, 5]
    assert rec.label is Label.DEAD
    assert not res.rejected


def test_transferred_hospital_is_excluded():
    res = ingest_text(rows("P1,50,F,2020-03-01,transferred_hospital,4,PCR,0,10"))
    assert res.records[0].excluded


def test_out_of_range_xray_row_rejected():
    res = ingest_text(rows(
        "P1,50,F,2020-03-01,released,4,XRayScore,1,25",
        "P1,50,F,2020-03-01,released,4,XRayScore,2,12",
    ))
    assert len(res.rejected) == 1 and res.rejected[0].line == 2
    assert [e.value for e in res.records[0].events] == [12.0]


@pytest.mark.parametrize(
    "line",
    [
        "P1,50,F,2020-03-01,released,4,Unknown,1,3",
        "P1,50,X,2020-03-01,released,4,PCR,1,3",
        "P1,50,F,2020-03-01,escaped,4,PCR,1,3",
        "P1,50,F,2020-13-01,released,4,PCR,1,3",
        "P1,50,F,2020-03-01,released,4,PCR,9,3",
        "P1,50,F,2020-03-01,released,4,PCR,1,-3",
        "P1,50,F,2020-03-01,released,4,PCR,1,abc",
    ],
)
def test_bad_values_reject_the_row(line):
    res = ingest_text(rows(line))
    assert len(res.rejected) == 1
    assert res.records == []


def test_structural_errors_raise():
    with pytest.raises(ParseError):
        ingest_text("a,b,c\n1,2,3\n")
    with pytest.raises(ParseError) as exc:
        ingest_text(rows("P1,50,F,2020-03-01,released,4,PCR,1"))
    assert exc.value.line == 2
    with pytest.raises(ParseError):
        ingest_text("")


def test_duplicate_and_conflicting_events_warn():
    res = ingest_text(rows(
        "P1,50,F,2020-03-01,released,4,PCR,1,3",
        "P1,50,F,2020-03-01,released,4,PCR,1,3",
        "P1,50,F,2020-03-01,released,4,PCR,2,3",
        "P1,50,F,2020-03-01,released,4,PCR,2,7",
    ))
    assert len(res.warnings) == 2
    assert [(e.day, e.value) for e in res.records[0].events] == [(1, 3.0), (2, 7.0)]


def test_patient_without_events():
    res = ingest_text(rows("P1,50,F,2020-03-01,released,4,,,"))
    assert res.records[0].events == ()


@pytest.mark.parametrize(
    "admission, phase",
    [(dt.date(2020, 3, 1), Phase.HCP), (dt.date(2020, 4, 10), Phase.MCP), (BOUNDARY, Phase.MCP)],
)
def test_assign_phase(admission, phase):
    assert assign_phase(make_record(admission=admission), BOUNDARY) is phase


def test_median_stay_of_two():
    stats = cohort_stats([make_record("A", stay=3), make_record("B", stay=9)])
    assert stats.phases["all"].median_stay == 6


def test_write_then_ingest_round_trip(tmp_path):
    recs = [
        make_record("A", [(0, "PCR", 12.5), (3, "LDH", 300)], outcome="died"),
        make_record("B", [], sex="F", admission=dt.date(2020, 4, 2)),
    ]
    path = tmp_path / "ev.csv"
    write_events(recs, path)
    again = ingest_text(path.read_text())
    assert sorted(again.records, key=lambda r: r.patient_id) == recs


def test_cohort_file_round_trip(tmp_path):
    c = Cohort([make_record("A", [(0, "PCR", 1.0)]), make_record("B", outcome="died")], BOUNDARY)
    save_cohort(c, tmp_path / "c.json")
    back = load_cohort(tmp_path / "c.json")
    assert back.records == c.records and back.boundary == BOUNDARY


def test_record_validation():
    with pytest.raises(ValueError):
        make_record(stay=0)
    with pytest.raises(ValueError):
        make_record(events=[(11, "PCR", 1.0)], stay=10)
