import pytest
from hypothesis import given
from hypothesis import strategies as st

from attrition.errors import (
    DuplicateError,
    EmptyCohortError,
    NegativeCountError,
    ParseError,
    RangeError,
    UnknownWindowError,
)
from attrition.ingest import (
    SubmissionRecord,
    TaskWindow,
    encode_label,
    load_activity,
    load_cohort,
    load_responses,
    load_submissions,
    merge_cohort,
    write_cohort,
)

from .conftest import HEADERS, response, snapshot, submissions_for


def test_responses_passthrough(csv_writer):
    path = csv_writer("r.csv", HEADERS["responses"], [["p1", "A", *[3] * 24]])
    (r,) = load_responses(path)
    assert r.items == (3,) * 24
    assert (r.participant_id, r.team_id) == ("p1", "A")


def test_responses_out_of_range(csv_writer):
    path = csv_writer("r.csv", HEADERS["responses"], [["p1", "A", 6, *[3] * 23]])
    with pytest.raises(RangeError) as exc:
        load_responses(path)
    assert "line 2" in str(exc.value) and "r.csv" in str(exc.value)


def test_responses_duplicate(csv_writer):
    rows = [["p1", "A", *[3] * 24], ["p1", "B", *[4] * 24]]
    path = csv_writer("r.csv", HEADERS["responses"], rows)
    with pytest.raises(DuplicateError):
        load_responses(path)


def test_responses_malformed_row(csv_writer):
    path = csv_writer("r.csv", HEADERS["responses"], [["p1", "A", *[3] * 23]])
    with pytest.raises(ParseError) as exc:
        load_responses(path)
    assert exc.value.line == 2


def test_responses_bad_header(csv_writer):
    path = csv_writer("r.csv", ["participant_id", "team"], [["p1", "A"]])
    with pytest.raises(ParseError):
        load_responses(path)


def test_activity_passthrough(csv_writer):
    path = csv_writer("a.csv", HEADERS["activity"], [["p1", "A", "task0", 5, 12, 1, 0]])
    (s,) = load_activity(path)
    assert s.window is TaskWindow.task0
    assert s.counts == (5, 12, 1, 0)


def test_activity_negative(csv_writer):
    path = csv_writer("a.csv", HEADERS["activity"], [["p1", "A", "task0", -1, 12, 1, 0]])
    with pytest.raises(NegativeCountError):
        load_activity(path)


def test_activity_unknown_window(csv_writer):
    path = csv_writer("a.csv", HEADERS["activity"], [["p1", "A", "task9", 1, 1, 1, 1]])
    with pytest.raises(UnknownWindowError):
        load_activity(path)


def test_activity_one_snapshot_per_window(csv_writer):
    rows = [["p1", "A", "task0", 1, 1, 1, 1], ["p1", "A", "task0", 2, 2, 2, 2]]
    with pytest.raises(DuplicateError):
        load_activity(csv_writer("a.csv", HEADERS["activity"], rows))


def test_submissions_parse(csv_writer):
    rows = [["A", "task0", "85", ""], ["A", "task1", "", ""], ["A", "stage2_gate", "", "1"]]
    recs = load_submissions(csv_writer("s.csv", HEADERS["submissions"], rows))
    assert [r.score for r in recs] == [85.0, None, None]
    assert recs[2].stage2_selected is True


def test_submissions_flag_only_on_gate(csv_writer):
    rows = [["A", "task0", "85", "1"]]
    with pytest.raises(ParseError):
        load_submissions(csv_writer("s.csv", HEADERS["submissions"], rows))


def test_submissions_negative_score(csv_writer):
    with pytest.raises(RangeError):
        load_submissions(csv_writer("s.csv", HEADERS["submissions"], [["A", "task0", "-2", ""]]))


@pytest.mark.parametrize("score, label", [(85.0, 1), (None, 0), (0.0, 1)])
def test_encode_label(score, label):
    assert encode_label(SubmissionRecord("A", TaskWindow.task1, score)) == label


def test_encode_label_gate_flag_wins():
    rec = SubmissionRecord("A", TaskWindow.stage2_gate, 40.0, False)
    assert encode_label(rec) == 0
    assert encode_label(SubmissionRecord("A", TaskWindow.stage2_gate, 40.0)) == 1


@given(st.one_of(st.none(), st.floats(min_value=0, max_value=1e6)),
       st.sampled_from([TaskWindow.task0, TaskWindow.task1, TaskWindow.task2]))
def test_encode_label_iff_score_present(score, task):
    rec = SubmissionRecord("T", task, score)
    assert encode_label(rec) == encode_label(rec) == int(score is not None)


def _three_team_sources():
    responses = [response("a1", "A"), response("b1", "B"), response("c1", "C")]
    snaps = [snapshot("a1", "A", "task0"), snapshot("b1", "B", "task0")]
    subs = submissions_for("A", {"task0": 1}) + submissions_for("B", {"task0": 0})
    return responses, snaps, subs


def test_merge_inner_join():
    cohort, summary = merge_cohort(*_three_team_sources())
    assert cohort.team_ids == ["A", "B"]
    assert summary.kept == 2
    assert summary.dropped == {"missing:activity+submissions": 1}
    assert cohort.teams["B"].labels == {TaskWindow.task0: 0}


def test_merge_full_overlap():
    responses = [response("a1", "A"), response("b1", "B")]
    snaps = [snapshot("a1", "A", "task0"), snapshot("b1", "B", "task1")]
    subs = submissions_for("A", {"task0": 1}) + submissions_for("B", {"task0": 1})
    cohort, summary = merge_cohort(responses, snaps, subs)
    assert len(cohort) == 2 and summary.n_dropped == 0


def test_merge_empty():
    with pytest.raises(EmptyCohortError):
        merge_cohort([response("a1", "A")], [snapshot("b1", "B", "task0")], [])


def test_merge_attrition_1520_to_1290():
    responses, snaps, subs = [], [], []
    for t in range(1520):
        tid = f"T{t:04d}"
        responses.append(response(f"{tid}-1", tid))
        if t < 1290:
            snaps.append(snapshot(f"{tid}-1", tid, "task0"))
            subs.extend(submissions_for(tid, {"task0": 1}))
    cohort, summary = merge_cohort(responses, snaps, subs)
    assert len(cohort) == 1290
    assert summary.dropped == {"missing:activity+submissions": 230}


@given(
    st.sets(st.integers(0, 12)),
    st.sets(st.integers(0, 12)),
    st.sets(st.integers(0, 12)),
)
def test_merge_accounts_for_every_team(r_ids, a_ids, s_ids):
    responses = [response(f"p{i}", f"T{i}") for i in r_ids]
    snaps = [snapshot(f"p{i}", f"T{i}", "task0") for i in a_ids]
    subs = [rec for i in s_ids for rec in submissions_for(f"T{i}", {"task0": i % 2})]
    everyone = {f"T{i}" for i in r_ids | a_ids | s_ids}
    both = {f"T{i}" for i in r_ids & a_ids & s_ids}
    if not both:
        with pytest.raises(EmptyCohortError):
            merge_cohort(responses, snaps, subs)
        return
    cohort, summary = merge_cohort(responses, snaps, subs)
    assert set(cohort.team_ids) == both
    assert summary.kept + summary.n_dropped == len(everyone)


def test_cohort_round_trip(tmp_path):
    responses = [response("a1", "A", 4), response("a2", "A", 2), response("b1", "B", 5)]
    snaps = [
        snapshot("a1", "A", "task0", (1, 2, 3, 4)),
        snapshot("a1", "A", "stage2_gate", (0, 9, 0, 1)),
        snapshot("b1", "B", "task1", (5, 5, 5, 5)),
    ]
    subs = submissions_for("A", {"task0": 1, "task1": 0, "stage2_gate": 1}) + submissions_for(
        "B", {"task0": 0, "task1": 1, "stage2_gate": 0}
    )
    cohort, _ = merge_cohort(responses, snaps, subs)
    paths = write_cohort(tmp_path, cohort)
    again, summary = load_cohort(*paths)
    assert again == cohort
    assert summary.n_dropped == 0
