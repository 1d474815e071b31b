"""Loading, validating and joining the three cohort input files.

Files
-----
responses.csv
    ``participant_id,team_id,item_01,...,item_24``; Likert ratings 1..5.
activity.csv
    ``participant_id,team_id,window,topics_entered,posts_read,likes_given,likes_received``;
    counters are per task window (not cumulative).
submissions.csv
    ``team_id,task,score,stage2_selected``; an empty score means the team
    never submitted.
"""

from __future__ import annotations

import csv
import enum
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    DuplicateError,
    EmptyCohortError,
    NegativeCountError,
    ParseError,
    RangeError,
    UnknownWindowError,
)

log = logging.getLogger(__name__)

N_ITEMS = 24
LIKERT = range(1, 6)
ITEM_COLUMNS = [f"item_{i:02d}" for i in range(1, N_ITEMS + 1)]
RESPONSE_HEADER = ["participant_id", "team_id", *ITEM_COLUMNS]
COUNTERS = ("topics_entered", "posts_read", "likes_given", "likes_received")
ACTIVITY_HEADER = ["participant_id", "team_id", "window", *COUNTERS]
SUBMISSION_HEADER = ["team_id", "task", "score", "stage2_selected"]


class TaskWindow(enum.IntEnum):
    """Deadline windows in competition order."""

    task0 = 0
    task1 = 1
    task2 = 2
    stage2_gate = 3

    @classmethod
    def parse(cls, label, *, path=None, line=None):
        try:
            return cls[label.strip()]
        except KeyError:
            raise UnknownWindowError(
                f"unknown window {label!r}", path=path, line=line,
                rule="window in {task0,task1,task2,stage2_gate}",
            ) from None


@dataclass(frozen=True)
class ParticipantResponse:
    participant_id: str
    team_id: str
    items: tuple[int, ...]

    def __post_init__(self):
        if len(self.items) != N_ITEMS:
            raise ParseError(f"expected {N_ITEMS} items, got {len(self.items)}")
        for v in self.items:
            if v not in LIKERT:
                raise RangeError(f"Likert value {v} outside 1..5")


@dataclass(frozen=True)
class ActivitySnapshot:
    participant_id: str
    team_id: str
    window: TaskWindow
    topics_entered: int
    posts_read: int
    likes_given: int
    likes_received: int

    def __post_init__(self):
        for name in COUNTERS:
            if getattr(self, name) < 0:
                raise NegativeCountError(f"{name} = {getattr(self, name)} is negative")

    @property
    def counts(self):
        return tuple(getattr(self, name) for name in COUNTERS)


@dataclass(frozen=True)
class SubmissionRecord:
    team_id: str
    task: TaskWindow
    score: float | None = None
    stage2_selected: bool | None = None

    def __post_init__(self):
        if self.score is not None and self.score < 0:
            raise RangeError(f"score {self.score} is negative")


@dataclass(frozen=True)
class TeamEntry:
    team_id: str
    responses: tuple[ParticipantResponse, ...]
    snapshots: tuple[ActivitySnapshot, ...]
    labels: dict[TaskWindow, int]


@dataclass(frozen=True)
class Cohort:
    teams: dict[str, TeamEntry]

    def __len__(self):
        return len(self.teams)

    @property
    def team_ids(self):
        return sorted(self.teams)

    def responses(self):
        return [r for tid in self.team_ids for r in self.teams[tid].responses]

    def snapshots(self):
        return [s for tid in self.team_ids for s in self.teams[tid].snapshots]


@dataclass
class MergeSummary:
    kept: int
    dropped: dict[str, int] = field(default_factory=dict)

    @property
    def n_dropped(self):
        return sum(self.dropped.values())


def _read_rows(path, header):
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open: {exc.strerror}", path=path) from exc
    with fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise ParseError("empty file", path=path, line=1, rule="header required") from None
        if [h.strip() for h in found] != header:
            raise ParseError(
                f"header {found!r} does not match expected columns",
                path=path, line=1, rule=",".join(header),
            )
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}",
                    path=path, line=line, rule="field count",
                )
            yield line, [c.strip() for c in row]


def _parse_int(text, *, path, line, column):
    try:
        return int(text)
    except ValueError:
        raise ParseError(
            f"{column}={text!r} is not an integer", path=path, line=line, rule="integer field"
        ) from None


def load_responses(path):
    """Read ``responses.csv`` into a list of :class:`ParticipantResponse`."""
    out = []
    seen = {}
    for line, row in _read_rows(path, RESPONSE_HEADER):
        pid, tid = row[0], row[1]
        if not pid or not tid:
            raise ParseError("empty identifier", path=path, line=line, rule="non-empty ids")
        items = []
        for col, text in zip(ITEM_COLUMNS, row[2:]):
            v = _parse_int(text, path=path, line=line, column=col)
            if v not in LIKERT:
                raise RangeError(
                    f"{col}={v} outside Likert scale", path=path, line=line, rule="1 <= item <= 5"
                )
            items.append(v)
        if pid in seen:
            raise DuplicateError(
                f"participant {pid!r} already defined on line {seen[pid]}",
                path=path, line=line, rule="unique participant_id",
            )
        seen[pid] = line
        out.append(ParticipantResponse(pid, tid, tuple(items)))
    return out


def load_activity(path):
    """Read ``activity.csv`` into a list of :class:`ActivitySnapshot`."""
    out = []
    seen = {}
    for line, row in _read_rows(path, ACTIVITY_HEADER):
        pid, tid = row[0], row[1]
        if not pid or not tid:
            raise ParseError("empty identifier", path=path, line=line, rule="non-empty ids")
        window = TaskWindow.parse(row[2], path=path, line=line)
        counts = []
        for col, text in zip(COUNTERS, row[3:]):
            v = _parse_int(text, path=path, line=line, column=col)
            if v < 0:
                raise NegativeCountError(
                    f"{col}={v} is negative", path=path, line=line, rule="count >= 0"
                )
            counts.append(v)
        key = (pid, window)
        if key in seen:
            raise DuplicateError(
                f"second snapshot for ({pid}, {window.name}); first on line {seen[key]}",
                path=path, line=line, rule="one snapshot per (participant_id, window)",
            )
        seen[key] = line
        out.append(ActivitySnapshot(pid, tid, window, *counts))
    return out


def load_submissions(path):
    """Read ``submissions.csv`` into a list of :class:`SubmissionRecord`."""
    out = []
    seen = {}
    for line, row in _read_rows(path, SUBMISSION_HEADER):
        tid, task_text, score_text, sel_text = row
        if not tid:
            raise ParseError("empty team_id", path=path, line=line, rule="non-empty ids")
        task = TaskWindow.parse(task_text, path=path, line=line)
        score = None
        if score_text and score_text.upper() != "NULL":
            try:
                score = float(score_text)
            except ValueError:
                raise ParseError(
                    f"score={score_text!r} is not a number", path=path, line=line,
                    rule="numeric score or empty",
                ) from None
            if score < 0:
                raise RangeError(
                    f"score={score} is negative", path=path, line=line, rule="score >= 0"
                )
        selected = None
        if sel_text:
            if sel_text not in ("0", "1"):
                raise ParseError(
                    f"stage2_selected={sel_text!r}", path=path, line=line,
                    rule="stage2_selected in {0,1,empty}",
                )
            if task is not TaskWindow.stage2_gate:
                raise ParseError(
                    "stage2_selected set on a non-gate row", path=path, line=line,
                    rule="stage2_selected only on stage2_gate rows",
                )
            selected = sel_text == "1"
        key = (tid, task)
        if key in seen:
            raise DuplicateError(
                f"second row for ({tid}, {task.name}); first on line {seen[key]}",
                path=path, line=line, rule="one row per (team_id, task)",
            )
        seen[key] = line
        out.append(SubmissionRecord(tid, task, score, selected))
    return out


def encode_label(record):
    """1 if the team submitted (any score, including 0), else 0.

    On ``stage2_gate`` rows an explicit ``stage2_selected`` flag takes
    precedence over score presence.
    """
    if record.task is TaskWindow.stage2_gate and record.stage2_selected is not None:
        return int(record.stage2_selected)
    return int(record.score is not None)


def merge_cohort(responses, snapshots, submissions):
    """Inner-join the three sources on ``team_id``.

    Returns
    -------
    (Cohort, MergeSummary)
        Dropped teams are counted under a single reason naming every source
        they were missing from, e.g. ``"missing:activity+submissions"``.
    """
    by_resp = defaultdict(list)
    for r in responses:
        by_resp[r.team_id].append(r)
    by_act = defaultdict(list)
    for s in snapshots:
        by_act[s.team_id].append(s)
    by_sub = defaultdict(dict)
    for rec in submissions:
        by_sub[rec.team_id][rec.task] = encode_label(rec)

    all_ids = set(by_resp) | set(by_act) | set(by_sub)
    teams = {}
    dropped = defaultdict(int)
    for tid in sorted(all_ids):
        missing = [
            name
            for name, src in (("responses", by_resp), ("activity", by_act), ("submissions", by_sub))
            if tid not in src
        ]
        if missing:
            dropped["missing:" + "+".join(missing)] += 1
            continue
        teams[tid] = TeamEntry(
            team_id=tid,
            responses=tuple(sorted(by_resp[tid], key=lambda r: r.participant_id)),
            snapshots=tuple(
                sorted(by_act[tid], key=lambda s: (s.participant_id, s.window))
            ),
            labels=dict(sorted(by_sub[tid].items())),
        )
    summary = MergeSummary(kept=len(teams), dropped=dict(sorted(dropped.items())))
    if not teams:
        raise EmptyCohortError(
            f"no team appears in all three sources ({len(all_ids)} distinct team ids)"
        )
    if summary.n_dropped:
        log.info("merge kept %d teams, dropped %s", summary.kept, summary.dropped)
    return Cohort(teams), summary


def load_cohort(responses_path, activity_path, submissions_path):
    return merge_cohort(
        load_responses(responses_path),
        load_activity(activity_path),
        load_submissions(submissions_path),
    )


def write_responses(path, responses):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESPONSE_HEADER)
        for r in responses:
            w.writerow([r.participant_id, r.team_id, *r.items])


def write_activity(path, snapshots):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ACTIVITY_HEADER)
        for s in snapshots:
            w.writerow([s.participant_id, s.team_id, s.window.name, *s.counts])


def _fmt_score(score):
    if score is None:
        return ""
    return repr(float(score)).removesuffix(".0") if float(score).is_integer() else repr(score)


def write_submissions(path, records):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUBMISSION_HEADER)
        for rec in records:
            sel = "" if rec.stage2_selected is None else str(int(rec.stage2_selected))
            w.writerow([rec.team_id, rec.task.name, _fmt_score(rec.score), sel])


def write_cohort(directory, cohort):
    """Serialize a cohort to the three input files.

    Labels are written as score-less rows (0) or score-0 rows (1); gate rows
    also carry the explicit selection flag so the round trip is lossless.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    records = []
    for tid in cohort.team_ids:
        for task, label in cohort.teams[tid].labels.items():
            sel = bool(label) if task is TaskWindow.stage2_gate else None
            records.append(SubmissionRecord(tid, task, 0.0 if label else None, sel))
    paths = (
        directory / "responses.csv",
        directory / "activity.csv",
        directory / "submissions.csv",
    )
    write_responses(paths[0], cohort.responses())
    write_activity(paths[1], cohort.snapshots())
    write_submissions(paths[2], records)
    return paths
